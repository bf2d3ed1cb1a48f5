#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "tdl/distill.hpp"
#include "tdl/models.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

Image noise_image(uint64_t seed) {
  Rng rng(seed);
  Image img(kImageHeight, kImageWidth);
  for (auto& v : img.rgb) v = static_cast<uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST_CASE("same spec and seed give identical parameters") {
  const Model a(waypoint_spec(Modality::image, 4));
  const Model b(waypoint_spec(Modality::image, 4));
  const Model c(waypoint_spec(Modality::image, 5));
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  CHECK(a.parameter_count() > 0);
}

TEST_CASE("output shapes of both heads") {
  const Model wp(waypoint_spec(Modality::image, 1));
  const Image img = noise_image(1);
  const Observation obs[] = {Observation::of(img), Observation::of(img), Observation::of(img)};
  const Tensor x = wp.encode(obs);
  CHECK(x.shape() == Shape{3, kImageHeight, kImageWidth, 3});
  CHECK(wp.forward(x).shape() == Shape{3, kNumWaypoints, 2});

  const Model seg(segmentation_spec(Modality::image, Modality::seg_camera, 1, {8, 8, 8, 8}));
  CHECK(seg.forward(x).shape() == Shape{3, kImageHeight, kImageWidth, kNumClasses});

  const Model view(segmentation_spec(Modality::image, Modality::seg_map, 1, {8, 8, 8, 8}));
  CHECK(view.forward(x).shape() == Shape{3, kMapSize, kMapSize, kNumClasses});
}

TEST_CASE("waypoint outputs stay inside the tanh bound for extreme inputs") {
  Model m(waypoint_spec(Modality::image, 2));
  for (auto& [name, p] : m.named_parameters())
    for (auto& v : p.mutable_data()) v *= 50.0;
  Image white_img(kImageHeight, kImageWidth);
  std::fill(white_img.rgb.begin(), white_img.rgb.end(), 255);
  const Image& white = white_img;
  const Image noisy = noise_image(3);
  for (const Image* img : std::array{&white, &noisy}) {
    const Waypoints w = predict_waypoints(m, Observation::of(*img));
    REQUIRE(w.points.size() == static_cast<std::size_t>(kNumWaypoints));
    for (const Vec2& p : w.points) {
      CHECK(std::abs(p.x) <= 1.0);
      CHECK(std::abs(p.y) <= 1.0);
    }
  }
}

TEST_CASE("feeding the wrong modality is rejected") {
  const Model m(waypoint_spec(Modality::seg_map, 1));
  const Image img = noise_image(1);
  CHECK_THROWS_AS(predict_waypoints(m, Observation::of(img)), ModalityError);
  const SegMap cam(kImageHeight, kImageWidth, 1);
  CHECK_THROWS_AS(predict_waypoints(m, Observation::camera_seg(cam)), ModalityError);
  const SegMap map(kMapSize, kMapSize, 1);
  CHECK_NOTHROW(predict_waypoints(m, Observation::map_seg(map)));
}

TEST_CASE("argmax ties resolve to the lowest id; a uniform shift changes nothing") {
  const Tensor flat = Tensor::zeros({1, 2, 2, kNumClasses});
  for (const SegMap& s : argmax_segmentation(flat))
    for (uint8_t id : s.ids) CHECK(id == 0);

  Rng rng(8);
  std::vector<double> v(2 * 3 * 4 * kNumClasses), shifted(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = rng.normal();
    shifted[i] = v[i] + 7.0;
  }
  CHECK(argmax_segmentation(Tensor::from({2, 3, 4, kNumClasses}, v)) ==
        argmax_segmentation(Tensor::from({2, 3, 4, kNumClasses}, shifted)));
}

TEST_CASE("clone is a deep copy") {
  const Model a(waypoint_spec(Modality::image, 6));
  Model b = a.clone();
  CHECK(b.checksum() == a.checksum());
  b.named_parameters().front().second.mutable_data()[0] += 1.0;
  CHECK(b.checksum() != a.checksum());
}

TEST_CASE("waypoint normalization round-trips") {
  Waypoints w;
  for (int k = 1; k <= kNumWaypoints; ++k) w.points.push_back({0.3 * k, 1.0 * k});
  const Waypoints back = denormalize_waypoints(normalize_waypoints(w));
  for (std::size_t i = 0; i < w.points.size(); ++i) {
    CHECK(back.points[i].x == doctest::Approx(w.points[i].x).epsilon(1e-12));
    CHECK(back.points[i].y == doctest::Approx(w.points[i].y).epsilon(1e-12));
  }
}

TEST_CASE("a segmentation model learns the identity on labels") {
  // seg_camera in, seg_camera out: the one-hot input already contains the answer.
  const World w = generate_world({WorldKind::roadworld, 3, 400.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  DatasetOptions opts;
  opts.mask = render_seg_cam;
  const Dataset data = generate_dataset(w, 96, 1, opts);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.lr = 0.1;
  cfg.input = Modality::seg_camera;
  cfg.label = Modality::seg_camera;
  const auto [model, report] =
      train_recognizer(segmentation_spec(Modality::seg_camera, Modality::seg_camera, 1, {8, 8, 16, 16}), data, cfg);
  CHECK(evaluate_segmentation(model, data, Modality::seg_camera).accuracy > 0.99);
}

TEST_CASE("batched prediction matches one-at-a-time prediction across chunk boundaries") {
  const World w = generate_world({WorldKind::roadworld, 3, 400.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  DatasetOptions opts;
  opts.mask = render_image;
  const Dataset data = generate_dataset(w, 70, 2, opts);
  std::vector<Observation> obs;
  for (const Sample& s : data) obs.push_back(Observation::of(s.image));
  const Model seg(segmentation_spec(Modality::image, Modality::seg_camera, 1, {4, 4, 8, 8}));
  const Model wp(waypoint_spec(Modality::image, 1, {4, 4, 8, 8}));
  const auto segs = predict_segmentation(seg, obs);
  const auto wps = predict_waypoints(wp, obs);
  REQUIRE(segs.size() == 70);
  for (std::size_t i : {std::size_t{0}, std::size_t{63}, std::size_t{64}, std::size_t{69}}) {
    CHECK(segs[i] == predict_segmentation(seg, obs[i]));
    // GEMM blocking depends on the batch size, so only the last bits may differ.
    const Waypoints single = predict_waypoints(wp, obs[i]);
    for (std::size_t j = 0; j < single.points.size(); ++j) {
      CHECK(wps[i].points[j].x == doctest::Approx(single.points[j].x).epsilon(1e-12));
      CHECK(wps[i].points[j].y == doctest::Approx(single.points[j].y).epsilon(1e-12));
    }
  }
}
