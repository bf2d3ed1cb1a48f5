#include <cmath>

#include "doctest.h"
#include "tdl/labelspace.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

SegMap random_seg(uint64_t seed, int h = 16, int w = 16) {
  Rng rng(seed);
  SegMap s(h, w);
  for (auto& id : s.ids) id = static_cast<uint8_t>(rng.below(kNumClasses));
  return s;
}

Dataset seg_dataset(std::initializer_list<std::pair<uint8_t, int>> counts) {
  // One 1 x N seg_map per call, with the given class counts.
  int n = 0;
  for (auto [c, k] : counts) n += k;
  Sample s;
  s.seg_map = SegMap(1, n);
  int i = 0;
  for (auto [c, k] : counts)
    for (int j = 0; j < k; ++j) s.seg_map.ids[static_cast<std::size_t>(i++)] = c;
  return {s};
}

}  // namespace

TEST_CASE("identity remap leaves labels unchanged") {
  const SegMap s = random_seg(1);
  CHECK(remap(s, ClassMap::identity()) == s);
}

TEST_CASE("remapping moves histogram mass exactly between mapped bins") {
  const World maze = generate_world({WorldKind::mazeworld, 3, 500.0, 4.0, 2.0, 4.0, default_style(WorldKind::mazeworld)});
  Dataset data = generate_dataset(maze, 20, 1);
  const auto before = class_histogram(data, Modality::seg_camera);
  remap_dataset(data, maze_to_road_map());
  const auto after = class_histogram(data, Modality::seg_camera);
  const auto d = static_cast<std::size_t>(SemClass::distractor);
  const auto o = static_cast<std::size_t>(SemClass::obstacle);
  CHECK(after[d] == 0.0);
  CHECK(after[o] == doctest::Approx(before[o] + before[d]).epsilon(1e-12));
  for (std::size_t c = 0; c < after.size(); ++c) {
    if (c != d && c != o) CHECK(after[c] == before[c]);
  }
}

TEST_CASE("remap with a composed table equals remapping twice") {
  const ClassMap a = parse_class_map("1:2,3:4");
  const ClassMap b = parse_class_map("2:0,5:3");
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SegMap s = random_seg(seed);
    CHECK(remap(s, compose(a, b)) == remap(remap(s, a), b));
  }
}

TEST_CASE("idempotent maps are stable under repetition") {
  const ClassMap m = maze_to_road_map();
  const SegMap s = random_seg(4);
  CHECK(remap(remap(s, m), m) == remap(s, m));
}

TEST_CASE("class map text form") {
  const ClassMap m = parse_class_map("5:3");
  CHECK(m == maze_to_road_map());
  CHECK(parse_class_map(format_class_map(m)) == m);
  CHECK_THROWS_AS(parse_class_map("9:1"), Error);
  CHECK_THROWS_AS(parse_class_map("1-2"), Error);
  ClassMap short_map = ClassMap::identity(3);
  CHECK_THROWS_AS(remap(random_seg(2), short_map), Error);
}

TEST_CASE("corrupt_depth: no-op, full holes, lognormal mean") {
  DepthMap depth(100, 1000, 10.0f);
  NoiseSpec none;
  CHECK(corrupt_depth(depth, none, 1) == depth);

  HoleMask all{100, 1000, std::vector<uint8_t>(100 * 1000, 1)};
  NoiseSpec holes{{all}, 1.0, 0.0};
  for (float v : corrupt_depth(depth, holes, 2).meters) CHECK(v == 0.0f);

  NoiseSpec noisy{{}, 0.0, 0.1};
  const DepthMap out = corrupt_depth(depth, noisy, 3);
  double sum = 0.0;
  for (float v : out.meters) sum += v / 10.0;
  const double ratio = sum / static_cast<double>(out.meters.size());
  CHECK(ratio >= 0.99);
  CHECK(ratio <= 1.02);
  CHECK(corrupt_depth(depth, noisy, 3) == out);

  NoiseSpec missing{{}, 0.5, 0.0};
  CHECK_THROWS_AS(corrupt_depth(depth, missing, 1), Error);
}

TEST_CASE("synthetic hole masks cover 5-20% of pixels") {
  const auto masks = synthetic_hole_masks(30, kImageHeight, kImageWidth, 7);
  REQUIRE(masks.size() == 30);
  for (const HoleMask& m : masks) {
    CHECK(m.height == kImageHeight);
    CHECK(coverage(m) >= 0.05);
    CHECK(coverage(m) <= 0.20);
  }
  CHECK(synthetic_hole_masks(30, kImageHeight, kImageWidth, 7) == masks);
}

TEST_CASE("label overlap estimates") {
  const Dataset a = seg_dataset({{1, 70}, {2, 30}});
  const Dataset b = seg_dataset({{1, 50}, {2, 50}});
  CHECK(estimate_label_overlap(a, a, Modality::seg_map) == doctest::Approx(1.0));
  CHECK(estimate_label_overlap(a, b, Modality::seg_map) == doctest::Approx(0.8));
  CHECK(estimate_label_overlap(seg_dataset({{1, 5}}), seg_dataset({{2, 5}}), Modality::seg_map) == 0.0);
  CHECK_THROWS_AS(estimate_label_overlap({}, a, Modality::seg_map), Error);
}
