#include <algorithm>
#include <set>

#include "doctest.h"
#include "tdl/distill.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

const World& road() {
  static const World w =
      generate_world({WorldKind::roadworld, 5, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  return w;
}

const Dataset& road_data() {
  static const Dataset d = [] {
    DatasetOptions o;
    o.mask = render_image | render_seg_map | render_seg_cam | render_expert;
    return generate_dataset(road(), 400, 3, o);
  }();
  return d;
}

TrainConfig small_cfg(Modality input, int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.input = input;
  c.seed = 1;
  return c;
}

constexpr std::array<int, 4> kSmall{8, 8, 16, 16};

}  // namespace

TEST_CASE("split is a seeded partition with the requested held-out share") {
  const auto [train, held] = split_indices(100, 0.1, 4);
  CHECK(train.size() == 90);
  CHECK(held.size() == 10);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(held.begin(), held.end());
  CHECK(all.size() == 100);
  CHECK(split_indices(100, 0.1, 4) == std::pair{train, held});
  CHECK(split_indices(100, 0.1, 5) != std::pair{train, held});
}

TEST_CASE("self-distillation from a frozen random teacher") {
  const ModelSpec spec = waypoint_spec(Modality::seg_map, 11, kSmall);
  const Model teacher(spec);
  TrainConfig cfg = small_cfg(Modality::seg_map, 25);
  cfg.lr = 1e-2;
  cfg.teacher_input = Modality::seg_map;
  ModelSpec student_spec = spec;
  student_spec.seed = 12;
  const auto [student, report] = distill(student_spec, &teacher, road_data(), cfg);
  CHECK(report.final_heldout() <= 0.05);
  CHECK(report.heldout_count == 40);
}

TEST_CASE("a single sample is memorized") {
  const Dataset one(road_data().begin(), road_data().begin() + 1);
  TrainConfig cfg = small_cfg(Modality::seg_map, 150);
  cfg.holdout_fraction = 0.0;
  cfg.batch_size = 1;
  const auto [m, r] = behavior_clone(waypoint_spec(Modality::seg_map, 2, kSmall), one, cfg);
  CHECK(r.train_loss.back() < 0.01);
  CHECK(r.heldout_loss.empty());
}

TEST_CASE("cross-modal distillation: map-view teacher, image student") {
  const Model teacher(waypoint_spec(Modality::seg_map, 3, kSmall));
  TrainConfig cfg = small_cfg(Modality::image, 1);
  cfg.teacher_input = Modality::seg_map;
  const auto [student, report] = distill(waypoint_spec(Modality::image, 4, kSmall), &teacher, road_data(), cfg);
  CHECK(student.spec().input == Modality::image);
  CHECK(report.train_loss.size() == 1);
  // The student must not be handed the teacher's modality.
  TrainConfig wrong = cfg;
  wrong.input = Modality::seg_map;
  CHECK_THROWS(distill(waypoint_spec(Modality::image, 4, kSmall), &teacher, road_data(), wrong));
}

TEST_CASE("zero epochs returns the initialization") {
  const ModelSpec spec = waypoint_spec(Modality::seg_map, 9, kSmall);
  const auto [m, r] = behavior_clone(spec, road_data(), small_cfg(Modality::seg_map, 0));
  CHECK(m.checksum() == Model(spec).checksum());
  CHECK(r.train_loss.empty());
}

TEST_CASE("the teacher is never modified") {
  const Model teacher(waypoint_spec(Modality::seg_map, 3, kSmall));
  const uint64_t before = teacher.checksum();
  TrainConfig cfg = small_cfg(Modality::seg_map, 2);
  cfg.teacher_input = Modality::seg_map;
  distill(waypoint_spec(Modality::seg_map, 8, kSmall), &teacher, road_data(), cfg);
  CHECK(teacher.checksum() == before);
}

TEST_CASE("identical inputs give identical report checksums") {
  const ModelSpec spec = waypoint_spec(Modality::seg_map, 6, kSmall);
  const auto a = behavior_clone(spec, road_data(), small_cfg(Modality::seg_map, 2)).second;
  const auto b = behavior_clone(spec, road_data(), small_cfg(Modality::seg_map, 2)).second;
  CHECK(a.checksum == b.checksum);
  CHECK(a.train_loss == b.train_loss);
  TrainConfig other = small_cfg(Modality::seg_map, 2);
  other.seed = 2;
  CHECK(behavior_clone(spec, road_data(), other).second.checksum != a.checksum);
}

TEST_CASE("behavior cloning reduces the training loss") {
  const auto [m, r] = behavior_clone(waypoint_spec(Modality::seg_map, 1, kSmall), road_data(), small_cfg(Modality::seg_map, 5));
  REQUIRE(r.train_loss.size() == 5);
  CHECK(r.train_loss.back() <= r.train_loss.front());
  CHECK(r.heldout_loss.size() == 5);
  CHECK(waypoint_disagreement(m, Modality::seg_map, m, Modality::seg_map, road_data()) == 0.0);
}

TEST_CASE("a constant-label recognizer reaches perfect accuracy") {
  Dataset data(road_data().begin(), road_data().begin() + 64);
  for (Sample& s : data) std::fill(s.seg_cam.ids.begin(), s.seg_cam.ids.end(), uint8_t{1});
  TrainConfig cfg = small_cfg(Modality::image, 6);
  cfg.label = Modality::seg_camera;
  cfg.lr = 0.05;
  const auto [m, r] = train_recognizer(segmentation_spec(Modality::image, Modality::seg_camera, 1, kSmall), data, cfg);
  REQUIRE(r.heldout_miou.has_value());
  CHECK(evaluate_segmentation(m, data, Modality::seg_camera).accuracy > 0.999);
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig c;
  c.lr = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.momentum = 1.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.holdout_fraction = 1.0;
  CHECK_THROWS_AS(validate(c), Error);
}
