#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "tdl/labelspace.hpp"
#include "tdl/metrics.hpp"
#include "tdl/worlds.hpp"

using namespace tdl;

namespace {

SegMap seg(int h, int w, std::initializer_list<uint8_t> ids) {
  SegMap s(h, w);
  s.ids.assign(ids);
  return s;
}

// Independent per-pixel counting oracle.
struct Brute {
  double miou = 0.0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> iou;
};

Brute brute_force(const SegMap& pred, const SegMap& gt, int classes) {
  Brute b;
  double sum = 0.0;
  int present = 0;
  int correct = 0;
  for (std::size_t i = 0; i < gt.ids.size(); ++i) correct += pred.ids[i] == gt.ids[i];
  for (int c = 0; c < classes; ++c) {
    int inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
      const bool p = pred.ids[i] == c, g = gt.ids[i] == c;
      inter += p && g;
      uni += p || g;
    }
    if (uni == 0) {
      b.iou.emplace_back();
      continue;
    }
    b.iou.emplace_back(static_cast<double>(inter) / uni);
    sum += *b.iou.back();
    ++present;
  }
  b.miou = sum / present;
  b.accuracy = static_cast<double>(correct) / static_cast<double>(gt.ids.size());
  return b;
}

}  // namespace

TEST_CASE("confusion matrix by hand") {
  const SegMap gt = seg(2, 2, {0, 0, 1, 1});
  const SegMap pred = seg(2, 2, {0, 1, 1, 1});
  const Confusion c = confusion(pred, gt, 2);
  CHECK(c.at(0, 0) == 1);
  CHECK(c.at(0, 1) == 1);
  CHECK(c.at(1, 1) == 2);
  CHECK(c.at(1, 0) == 0);
  CHECK(c.total() == 4);

  const SegMetrics m = seg_metrics(c);
  CHECK(*m.iou[0] == 0.5);
  CHECK(*m.iou[1] == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(m.miou == doctest::Approx(7.0 / 12).epsilon(1e-15));
  CHECK(m.accuracy == 0.75);
}

TEST_CASE("perfect prediction and absent classes") {
  const SegMap gt = seg(1, 4, {0, 1, 1, 3});
  const Confusion c = confusion(gt, gt);
  for (int a = 0; a < kNumClasses; ++a)
    for (int b = 0; b < kNumClasses; ++b)
      if (a != b) CHECK(c.at(a, b) == 0);
  const SegMetrics m = seg_metrics(c);
  CHECK(m.miou == 1.0);
  CHECK(m.accuracy == 1.0);
  CHECK_FALSE(m.iou[2].has_value());
  CHECK_FALSE(m.iou[5].has_value());
  CHECK_THROWS_AS(confusion(gt, seg(2, 2, {0, 0, 0, 0})), ShapeError);
}

TEST_CASE("seg_metrics equals the brute-force oracle on random 8x8 maps") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    SegMap gt(8, 8), pred(8, 8);
    // Few classes per map so that absent classes are exercised too.
    const int used = 1 + static_cast<int>(rng.below(kNumClasses));
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
      gt.ids[i] = static_cast<uint8_t>(rng.below(static_cast<uint64_t>(used)));
      pred.ids[i] = rng.uniform() < 0.5 ? gt.ids[i] : static_cast<uint8_t>(rng.below(static_cast<uint64_t>(used)));
    }
    const SegMetrics m = seg_metrics(confusion(pred, gt));
    const Brute b = brute_force(pred, gt, kNumClasses);
    CHECK(m.miou == b.miou);
    CHECK(m.accuracy == b.accuracy);
    CHECK(m.iou == b.iou);
    double best = 0.0;
    for (const auto& v : m.iou) best = std::max(best, v.value_or(0.0));
    CHECK(m.miou <= best);
    CHECK(m.accuracy >= 0.0);
    CHECK(m.accuracy <= 1.0);
  }
}

TEST_CASE("accuracy model products") {
  const AccuracyFactors ones;
  for (TransferMethod t : {TransferMethod::direct, TransferMethod::modular, TransferMethod::distill})
    CHECK(predict_accuracy(ones, t) == 1.0);

  AccuracyFactors f;
  f.a_P = 0.9;
  f.a_l = 0.8;
  f.G_L = 1.0;
  CHECK(predict_accuracy(f, TransferMethod::modular) == doctest::Approx(0.72).epsilon(1e-12));
  f.a_S = 0.7;
  f.G_I = 0.3;
  CHECK(std::abs(predict_accuracy(f, TransferMethod::direct) - 0.21) < 1e-12);
  f.a_d = 0.6;
  CHECK(std::abs(predict_accuracy(f, TransferMethod::distill) - 0.54) < 1e-12);
}

TEST_CASE("predict_accuracy is monotone in every factor") {
  Rng rng(3);
  double AccuracyFactors::*fields[] = {&AccuracyFactors::a_P, &AccuracyFactors::a_l, &AccuracyFactors::a_d,
                                       &AccuracyFactors::a_S, &AccuracyFactors::G_I, &AccuracyFactors::G_L};
  for (int trial = 0; trial < 200; ++trial) {
    AccuracyFactors f;
    for (auto field : fields) f.*field = rng.uniform();
    for (auto field : fields) {
      AccuracyFactors g = f;
      g.*field = std::min(1.0, g.*field + rng.uniform() * 0.5);
      for (TransferMethod t : {TransferMethod::direct, TransferMethod::modular, TransferMethod::distill})
        CHECK(predict_accuracy(g, t) >= predict_accuracy(f, t));
    }
  }
}

TEST_CASE("distillation beats modular whenever a_d >= a_l") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    AccuracyFactors f;
    f.a_P = rng.uniform();
    f.G_L = rng.uniform();
    f.a_l = rng.uniform();
    f.a_d = f.a_l + (1.0 - f.a_l) * rng.uniform();
    CHECK(predict_accuracy(f, TransferMethod::distill) >= predict_accuracy(f, TransferMethod::modular));
  }
}

TEST_CASE("measured factors") {
  FactorMeasurements m;
  m.source_success = 0.8;
  m.proxy_success = 0.7;
  m.proxy_target_success = 0.5;
  m.distilled_success = 0.4;
  m.recognizer_target_miou = 0.6;
  m.label_overlap = 0.9;
  m.image_overlap = 0.2;
  const AccuracyFactors f = measure_factors(m);
  CHECK(f.a_S == 0.8);
  CHECK(f.a_P == 0.7);
  CHECK(f.a_d == doctest::Approx(0.8));
  CHECK(f.a_l == 0.6);
  m.distilled_success = 0.9;
  CHECK(measure_factors(m).a_d == 1.0);
}

TEST_CASE("identical domains have overlap near one") {
  // Histogram intersection is biased low on small samples; 2000 frames per
  // side brings the bias under the 0.02 tolerance.
  const World w = generate_world({WorldKind::roadworld, 1, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)});
  DatasetOptions o;
  o.mask = render_image | render_seg_map;
  const Dataset a = generate_dataset(w, 2000, 1, o);
  const Dataset b = generate_dataset(w, 2000, 2, o);
  CHECK(estimate_image_overlap(a, b) >= 0.98);
  CHECK(estimate_label_overlap(a, b, Modality::seg_map) >= 0.98);
  CHECK(estimate_image_overlap(a, a) == doctest::Approx(1.0));
  const World t = generate_world({WorldKind::trackworld, 1, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::trackworld)});
  CHECK(estimate_image_overlap(a, generate_dataset(t, 2000, 1, o)) < estimate_image_overlap(a, b));
}
