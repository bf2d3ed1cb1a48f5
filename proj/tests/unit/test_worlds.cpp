#include <cmath>
#include <set>

#include "doctest.h"
#include "tdl/drive_eval.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

WorldSpec spec_of(WorldKind kind, uint64_t seed, double obstacles = 1.0) {
  return {kind, seed, 500.0, 4.0, obstacles, 4.0, default_style(kind)};
}

AgentState at(Vec2 p, double heading) {
  AgentState a;
  a.position = p;
  a.heading = heading;
  return a;
}

constexpr WorldKind kKinds[] = {WorldKind::trackworld, WorldKind::mazeworld, WorldKind::roadworld};

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
  for (WorldKind k : kKinds) {
    CAPTURE(to_string(k));
    const World a = generate_world(spec_of(k, 7));
    const World b = generate_world(spec_of(k, 7));
    CHECK(a.path().points() == b.path().points());
    CHECK(a.props().size() == b.props().size());
    const AgentState pose = spawn_pose(a, 3);
    CHECK(render(a, pose) == render(b, pose));
    CHECK(generate_world(spec_of(k, 8)).path().points() != a.path().points());
  }
}

TEST_CASE("track and road loops match the requested length; zero density places nothing on the path") {
  for (WorldKind k : {WorldKind::trackworld, WorldKind::roadworld}) {
    for (uint64_t seed = 0; seed < 5; ++seed) {
      const World w = generate_world(spec_of(k, seed, 0.0));
      CHECK(w.path().length() >= 450.0);
      CHECK(w.path().length() <= 550.0);
      for (const Prop& p : w.props()) CHECK_FALSE(p.avoid);
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  WorldSpec s = spec_of(WorldKind::roadworld, 1);
  s.length = 10.0;
  CHECK_THROWS_AS(generate_world(s), Error);
  StyleSpec bad = default_style(WorldKind::roadworld);
  bad.palette[1][0] = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
  CHECK(styles_distinct(default_style(WorldKind::trackworld), default_style(WorldKind::roadworld)));
}

TEST_CASE("rendering: sky rows, centre map cell, depth ordering") {
  const World w = straight_test_world();
  const Sample s = render(w, at({50, 0}, 0.0), {render_all, 1.0, {}});
  // The top row looks above the horizon: sky class, maximum depth, one colour.
  for (int c = 0; c < kImageWidth; ++c) {
    CHECK(s.seg_cam.at(0, c) == 0);
    CHECK(s.depth.at(0, c) == static_cast<float>(kMaxDepth));
    for (int k = 0; k < 3; ++k) CHECK(s.image.rgb[static_cast<std::size_t>(c) * 3 + k] == s.image.rgb[static_cast<std::size_t>(k)]);
  }
  // The lane marking runs down the centre line; one metre to the right is plain road.
  CHECK(s.seg_map.at(kMapSize - 1, kMapSize / 2) == static_cast<uint8_t>(SemClass::marking));
  CHECK(s.seg_map.at(kMapSize - 1, kMapSize / 2 + 4) == static_cast<uint8_t>(SemClass::road));
  CHECK(s.seg_map.at(kMapSize - 1, kMapSize / 2 + 12) == static_cast<uint8_t>(SemClass::offroad));
  CHECK(s.depth.at(kImageHeight - 1, kImageWidth / 2) < s.depth.at(kImageHeight / 2, kImageWidth / 2));
}

TEST_CASE("modalities rendered from one state agree") {
  const World w = generate_world(spec_of(WorldKind::roadworld, 4));
  const Dataset data = generate_dataset(w, 20, 9);
  for (const Sample& s : data) {
    for (std::size_t i = 0; i < s.seg_cam.ids.size(); ++i) {
      // Sky reads as maximum depth; distant ground is clamped to it as well.
      if (s.seg_cam.ids[i] == 0) CHECK(s.depth.meters[i] == static_cast<float>(kMaxDepth));
      CHECK(s.depth.meters[i] > 0.0f);
      CHECK(s.depth.meters[i] <= static_cast<float>(kMaxDepth));
    }
  }
}

TEST_CASE("expert on a straight: waypoints straight ahead, mirrored when turned around") {
  const World w = straight_test_world();
  const Waypoints ahead = expert_waypoints(w, at({50, 0}, 0.0));
  REQUIRE(ahead.points.size() == static_cast<std::size_t>(kNumWaypoints));
  for (int k = 0; k < kNumWaypoints; ++k) {
    CHECK(std::abs(ahead.points[static_cast<std::size_t>(k)].x) < 1e-6);
    CHECK(std::abs(ahead.points[static_cast<std::size_t>(k)].y - (k + 1) * kWaypointSpacing) < 1e-6);
  }
  const Waypoints behind = expert_waypoints(w, at({50, 0}, kPi));
  for (int k = 0; k < kNumWaypoints; ++k) {
    CHECK(behind.points[static_cast<std::size_t>(k)].x == doctest::Approx(-ahead.points[static_cast<std::size_t>(k)].x).epsilon(1e-9));
    CHECK(behind.points[static_cast<std::size_t>(k)].y == doctest::Approx(-ahead.points[static_cast<std::size_t>(k)].y).epsilon(1e-9));
  }
}

TEST_CASE("expert steers around a hazard 3 m ahead") {
  Prop hazard;
  hazard.cls = static_cast<uint8_t>(SemClass::obstacle);
  hazard.center = {53, 0};
  hazard.radius = 0.5;
  hazard.avoid = true;
  const World w = straight_test_world().with_prop(hazard);
  const Waypoints wp = expert_waypoints(w, at({50, 0}, 0.0));
  CHECK(std::abs(wp.points[2].x) >= 1.0);
}

TEST_CASE("kinematics") {
  const World w = straight_test_world();
  SUBCASE("straight drive raises no events") {
    AgentState a = at({50, 0}, 0.0);
    for (int i = 0; i < 10; ++i) {
      const StepResult r = step(w, a, {0.0, 1.0});
      CHECK_FALSE(r.events.any());
      a = r.state;
    }
    CHECK(a.position.x == doctest::Approx(55.0));
    CHECK(a.odometer == doctest::Approx(5.0));
  }
  SUBCASE("full lock for one second of yaw at dt pi/10 turns the agent around") {
    AgentState a = at({50, 0}, 0.0);
    for (int i = 0; i < 10; ++i) a = step(w, a, {1.0, 0.0}, kPi / 10.0).state;
    CHECK(std::cos(a.heading) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("non-finite controls are treated as neutral") {
    const StepResult r = step(w, at({50, 0}, 0.0), {std::nan(""), std::nan("")});
    CHECK(r.state.heading == 0.0);
    CHECK(r.state.speed == 0.0);
  }
}

TEST_CASE("driving at a wall 10 m ahead collides within 21 +- 1 steps") {
  const World maze = World::from_maze(spec_of(WorldKind::mazeworld, 0), {"..#"}, 8.0, {});
  AgentState a = at({6, 4}, 0.0);
  int steps = 0;
  while (steps < 100) {
    const StepResult r = step(maze, a, {0.0, 1.0});
    a = r.state;
    ++steps;
    if (r.events.collision) break;
  }
  CHECK(steps >= 20);
  CHECK(steps <= 22);
}

TEST_CASE("datasets: determinism, seed sensitivity and first-waypoint plausibility") {
  const World w = generate_world(spec_of(WorldKind::trackworld, 2));
  const Dataset a = generate_dataset(w, 12, 5);
  CHECK(a == generate_dataset(w, 12, 5));
  CHECK(a != generate_dataset(w, 12, 6));
  DatasetOptions straight;
  straight.lateral_perturbation = 0.0;
  straight.heading_perturbation = 0.0;
  for (const Sample& s : generate_dataset(w, 30, 7, straight)) {
    // On the expert path with no perturbation, the first waypoint lies ~1 m ahead.
    CHECK(std::abs(s.expert.points[0].norm() - kWaypointSpacing) < 0.2);
  }
}

TEST_CASE("restyling changes pixels only") {
  for (WorldKind k : kKinds) {
    CAPTURE(to_string(k));
    const World a = generate_world(spec_of(k, 5));
    const World b = a.restyled(default_style(k == WorldKind::roadworld ? WorldKind::trackworld : WorldKind::roadworld));
    const Dataset da = generate_dataset(a, 6, 1);
    const Dataset db = generate_dataset(b, 6, 1);
    for (std::size_t i = 0; i < da.size(); ++i) {
      CHECK(da[i].seg_cam == db[i].seg_cam);
      CHECK(da[i].seg_map == db[i].seg_map);
      CHECK(da[i].depth == db[i].depth);
      CHECK(da[i].expert == db[i].expert);
      CHECK(da[i].image != db[i].image);
    }
  }
}

TEST_CASE("the expert drives 2000 steps without collision in every world kind") {
  for (WorldKind k : kKinds) {
    for (uint64_t seed = 0; seed < 2; ++seed) {
      CAPTURE(to_string(k));
      CAPTURE(seed);
      const World w = generate_world(spec_of(k, seed + 10));
      AgentState a = spawn_pose(w, seed);
      PidController pid(default_controllers()[2]);
      int collisions = 0, offroad = 0;
      for (int i = 0; i < 2000; ++i) {
        const StepResult r = step(w, a, pid(expert_waypoints(w, a)));
        collisions += r.events.collision;
        offroad += r.events.offroad;
        a = r.state;
      }
      CHECK(collisions == 0);
      CHECK(offroad < 20);
    }
  }
}
