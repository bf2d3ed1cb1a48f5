#pragma once

// Segmentation metrics and the multiplicative accuracy model for comparing
// transfer methods.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tdl/types.hpp"

namespace tdl {

/// counts[gt * C + pred].
struct Confusion {
  int classes = 0;
  std::vector<int64_t> counts;

  explicit Confusion(int c = kNumClasses) : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}
  int64_t at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * classes + pred]; }
  int64_t total() const;
  void add(const SegMap& pred, const SegMap& gt);
  Confusion& operator+=(const Confusion& o);
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(const SegMap& pred, const SegMap& gt, int num_classes = kNumClasses);

struct SegMetrics {
  Confusion matrix;
  std::vector<std::optional<double>> iou;  // nullopt: class absent from gt and pred
  double miou = 0.0;
  double accuracy = 0.0;
};

SegMetrics seg_metrics(const Confusion& c);

struct AccuracyFactors {
  double a_P = 1.0;  // proxy model, source domain
  double a_l = 1.0;  // recognizer, target domain
  double a_d = 1.0;  // second distillation
  double a_S = 1.0;  // source model, source domain
  double G_I = 1.0;  // image-domain overlap
  double G_L = 1.0;  // label-domain overlap
};

enum class TransferMethod : uint8_t { direct, modular, distill };
std::string_view to_string(TransferMethod m);

/// direct: a_S*G_I; modular: a_P*a_l*G_L; distill: a_P*G_L*a_d.
double predict_accuracy(const AccuracyFactors& f, TransferMethod method);

/// Quantities measured on a finished experiment, from which the factors are
/// derived.
struct FactorMeasurements {
  double source_success = 0.0;          // f^S in the source world
  double proxy_success = 0.0;           // f^P on ground-truth labels, source world
  double proxy_target_success = 0.0;    // f^P on ground-truth labels, target world
  double distilled_success = 0.0;       // f^T in the target world
  double recognizer_target_miou = 0.0;  // a_l
  double label_overlap = 0.0;           // G_L
  double image_overlap = 0.0;           // G_I
};

/// a_d is the share of the teacher's target-world success that the student
/// retains, clamped to [0,1].
AccuracyFactors measure_factors(const FactorMeasurements& m);

/// Joint RGB histogram with `bins` levels per channel, normalized.
std::vector<double> color_histogram(const Dataset& data, int bins = 8);
double estimate_image_overlap(const Dataset& a, const Dataset& b, int bins = 8);

}  // namespace tdl
