#pragma once

// The distillation operator f := D(g) and the supervised trainers built on it.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tdl/metrics.hpp"
#include "tdl/models.hpp"

namespace tdl {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 3e-3;
  double momentum = 0.9;
  uint64_t seed = 0;
  Modality input = Modality::image;  // student input
  /// Modality fed to a teacher model; nullopt means the stored column
  /// (expert waypoints, or ground-truth labels for segmentation heads).
  std::optional<Modality> teacher_input;
  /// Label raster for segmentation targets.
  Modality label = Modality::seg_camera;
  double holdout_fraction = 0.1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& cfg);

struct TrainReport {
  std::string stage;
  std::vector<double> train_loss;    // per epoch
  std::vector<double> heldout_loss;  // per epoch; empty when nothing is held out
  std::optional<double> heldout_miou;
  int train_count = 0;
  int heldout_count = 0;
  double wall_seconds = 0.0;  // not part of reproducible output
  uint64_t checksum = 0;

  double final_heldout() const;
};

using EpochCallback = std::function<void(const TrainReport&)>;

/// Trains a fresh student built from `student_spec` to match `teacher`'s
/// outputs under mean L1 (softmax space for segmentation). Teacher outputs
/// are computed once up front; the teacher is never modified.
std::pair<Model, TrainReport> distill(const ModelSpec& student_spec, const Model* teacher, const Dataset& data,
                                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// distill() against the stored expert waypoints.
std::pair<Model, TrainReport> behavior_clone(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                                             const EpochCallback& on_epoch = {});

/// Per-pixel cross-entropy against cfg.label; the report carries held-out mIoU.
std::pair<Model, TrainReport> train_recognizer(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                                               const EpochCallback& on_epoch = {});

/// Seeded shuffle; the last `holdout_fraction` of the permutation is held out.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double holdout_fraction,
                                                                            uint64_t seed);

/// Segmentation metrics of `model` over a dataset against `label`.
SegMetrics evaluate_segmentation(const Model& model, const Dataset& data, Modality label);
/// Mean L1 between two waypoint models' normalized outputs.
double waypoint_disagreement(const Model& a, Modality a_input, const Model& b, Modality b_input, const Dataset& data);

}  // namespace tdl
