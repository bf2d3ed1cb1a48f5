#include "tdl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tdl/labelspace.hpp"

namespace tdl {

int64_t Confusion::total() const { return std::accumulate(counts.begin(), counts.end(), int64_t{0}); }

void Confusion::add(const SegMap& pred, const SegMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.ids.size() != gt.ids.size()) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.ids.size(); ++i) {
    const int g = gt.ids[i], p = pred.ids[i];
    if (g >= classes || p >= classes) {
      throw Error("confusion: class id " + std::to_string(std::max(g, p)) + " outside " + std::to_string(classes) +
                  " classes");
    }
    ++counts[static_cast<std::size_t>(g) * classes + p];
  }
}

Confusion& Confusion::operator+=(const Confusion& o) {
  if (o.classes != classes) throw ShapeError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  return *this;
}

Confusion confusion(const SegMap& pred, const SegMap& gt, int num_classes) {
  Confusion c(num_classes);
  c.add(pred, gt);
  return c;
}

SegMetrics seg_metrics(const Confusion& c) {
  const int64_t total = c.total();
  if (total == 0) throw Error("seg_metrics: empty confusion matrix");
  SegMetrics m;
  m.matrix = c;
  int64_t diag = 0;
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < c.classes; ++k) {
    const int64_t tp = c.at(k, k);
    int64_t fp = 0, fn = 0;
    for (int j = 0; j < c.classes; ++j) {
      if (j == k) continue;
      fp += c.at(j, k);
      fn += c.at(k, j);
    }
    diag += tp;
    const int64_t denom = tp + fp + fn;
    if (denom == 0) {
      m.iou.emplace_back(std::nullopt);
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    m.iou.emplace_back(iou);
    sum += iou;
    ++present;
  }
  m.miou = present ? sum / present : 0.0;
  m.accuracy = static_cast<double>(diag) / static_cast<double>(total);
  return m;
}

std::string_view to_string(TransferMethod m) {
  switch (m) {
    case TransferMethod::direct: return "direct";
    case TransferMethod::modular: return "modular";
    case TransferMethod::distill: return "distill";
  }
  return "?";
}

double predict_accuracy(const AccuracyFactors& f, TransferMethod method) {
  for (double v : {f.a_P, f.a_l, f.a_d, f.a_S, f.G_I, f.G_L}) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("accuracy factor " + std::to_string(v) + " outside [0,1]");
  }
  switch (method) {
    case TransferMethod::direct: return f.a_S * f.G_I;
    case TransferMethod::modular: return f.a_P * f.a_l * f.G_L;
    case TransferMethod::distill: return f.a_P * f.G_L * f.a_d;
  }
  return 0.0;
}

AccuracyFactors measure_factors(const FactorMeasurements& m) {
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  AccuracyFactors f;
  f.a_S = unit(m.source_success);
  f.a_P = unit(m.proxy_success);
  f.a_l = unit(m.recognizer_target_miou);
  f.a_d = m.proxy_target_success > 0.0 ? unit(m.distilled_success / m.proxy_target_success) : 0.0;
  f.G_L = unit(m.label_overlap);
  f.G_I = unit(m.image_overlap);
  return f;
}

std::vector<double> color_histogram(const Dataset& data, int bins) {
  if (bins < 1 || bins > 256) throw Error("color histogram bins must be within [1, 256]");
  if (data.empty()) throw Error("color histogram of an empty dataset");
  std::vector<double> h(static_cast<std::size_t>(bins) * bins * bins, 0.0);
  double total = 0.0;
  for (const auto& s : data) {
    if (s.image.rgb.empty()) throw ModalityError("dataset lacks images");
    for (std::size_t i = 0; i + 2 < s.image.rgb.size(); i += 3) {
      const int r = s.image.rgb[i] * bins / 256;
      const int g = s.image.rgb[i + 1] * bins / 256;
      const int b = s.image.rgb[i + 2] * bins / 256;
      h[static_cast<std::size_t>((r * bins + g) * bins + b)] += 1.0;
    }
    total += static_cast<double>(s.image.rgb.size() / 3);
  }
  for (auto& v : h) v /= total;
  return h;
}

double estimate_image_overlap(const Dataset& a, const Dataset& b, int bins) {
  return histogram_intersection(color_histogram(a, bins), color_histogram(b, bins));
}

}  // namespace tdl
