#pragma once

// Experiment orchestration: two-stage task distillation, the direct and
// modular baselines, segmentation transfer through a depth proxy, and the
// target-data ablation.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tdl/distill.hpp"
#include "tdl/drive_eval.hpp"
#include "tdl/labelspace.hpp"
#include "tdl/metrics.hpp"
#include "tdl/worlds.hpp"

namespace tdl {

/// Training hyperparameters and architecture of one stage.
struct StageSettings {
  int epochs = 20;
  int batch_size = 32;
  double lr = 3e-3;
  double momentum = 0.9;
  double holdout_fraction = 0.1;
  std::array<int, 4> widths{16, 32, 64, 64};
  /// Sanity bound on the final held-out loss; exceeding it aborts the run.
  double max_heldout_loss = 0.5;

  friend bool operator==(const StageSettings&, const StageSettings&) = default;
};

struct EvalProtocol {
  int episodes_per_controller = 5;
  int cap = 2000;
  double lighting_jitter = 0.2;
  std::vector<double> thresholds = default_thresholds();

  friend bool operator==(const EvalProtocol&, const EvalProtocol&) = default;
};

/// Depth corruption applied to target proxy labels (and, when
/// `augment_source`, to the source depth the proxy model trains on).
struct NoiseParams {
  int hole_pool = 0;
  double hole_rate = 0.0;
  double sigma = 0.0;
  bool augment_source = true;

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  WorldSpec source{WorldKind::trackworld, 1, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::trackworld)};
  WorldSpec target{WorldKind::roadworld, 2, 500.0, 4.0, 1.0, 4.0, default_style(WorldKind::roadworld)};
  Modality proxy = Modality::seg_map;
  ClassMap class_map = ClassMap::identity();
  int source_n = 10000;
  int target_n = 10000;
  /// Held-out target samples for segmentation metrics (seg transfer only).
  int test_n = 500;
  DatasetOptions data;
  NoiseParams noise;
  StageSettings source_stage;
  StageSettings proxy_stage{20, 32, 3e-3, 0.9, 0.1, {8, 16, 32, 32}, 0.5};
  StageSettings target_stage;
  StageSettings recognizer_stage{20, 32, 3e-3, 0.9, 0.1, {16, 32, 64, 64}, 1.5};
  EvalProtocol eval;
  /// Also evaluate f^S and f^P in the source world and f^P on target labels,
  /// which the accuracy-factor measurement needs.
  bool measure_factors = true;
  uint64_t seed = 0;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ConfigError (line 0) on violated invariants.
void validate(const ExperimentConfig& cfg);

struct Provenance {
  std::string config_hash;
  uint64_t seed = 0;
  std::string code_version;
};

struct AblationRow {
  double fraction = 0.0;
  int target_samples = 0;
  double distill_mean = 0.0;
  double modular_mean = 0.0;
  double recognizer_miou = 0.0;
};

struct ExperimentReport {
  std::string experiment;
  std::string method;
  std::vector<TrainReport> stages;
  std::optional<DriveMetrics> drive;
  /// Named segmentation results, e.g. adapted / direct / proxy_on_target.
  std::vector<std::pair<std::string, SegMetrics>> seg;
  std::optional<AccuracyFactors> factors;
  std::optional<FactorMeasurements> measurements;
  std::vector<AblationRow> ablation;
  Provenance provenance;
};

enum class RecognizerTraining : uint8_t { ground_truth, predicted_in_source };

using ProgressFn = std::function<void(const std::string&)>;

/// Lazily builds and memoizes every artifact of one experiment so that the
/// methods compared in a run share worlds, datasets and upstream models.
/// With a cache directory, trained models and datasets are written as
/// checkpoints and reloaded on later runs with the same config hash.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg, std::optional<std::filesystem::path> cache_dir = std::nullopt,
                       ProgressFn progress = {});
  ~Experiment();
  Experiment(Experiment&&) noexcept;
  Experiment& operator=(Experiment&&) noexcept;

  const ExperimentConfig& config() const;
  const std::string& config_hash() const;

  const World& source_world();
  const World& target_world();
  /// Source samples with labels remapped through the class map.
  const Dataset& source_data();
  /// First floor(fraction * target_n) target samples.
  const Dataset& target_data(double fraction = 1.0);

  const Model& source_model();  // f^S
  const Model& proxy_model();   // f^P, on ground-truth source labels
  /// Proxy-input policy trained on source recognizer predictions.
  const Model& proxy_model_predicted();
  const Model& source_recognizer();
  const Model& target_recognizer(double fraction = 1.0);
  const Model& target_model(double fraction = 1.0);  // f^T

  /// Train report of a finished stage; throws if the stage has not run.
  const TrainReport& stage_report(const std::string& stage) const;

  DriveMetrics evaluate(const World& world, const Policy& policy, const std::string& label);
  Provenance provenance() const;

 private:
  struct State;
  std::unique_ptr<State> s_;
};

ExperimentReport run_task_distillation(Experiment& ex);
ExperimentReport run_direct(Experiment& ex);
ExperimentReport run_modular(Experiment& ex, RecognizerTraining training = RecognizerTraining::ground_truth);
ExperimentReport run_data_ablation(Experiment& ex, const std::vector<double>& fractions = {0.125, 0.25, 0.5, 1.0});
/// Direct, modular, modular-predicted and task distillation on one experiment.
std::vector<ExperimentReport> run_policy_transfer(Experiment& ex);

ExperimentReport run_task_distillation(const ExperimentConfig& cfg);
ExperimentReport run_direct(const ExperimentConfig& cfg);
ExperimentReport run_modular(const ExperimentConfig& cfg, RecognizerTraining training = RecognizerTraining::ground_truth);
ExperimentReport run_data_ablation(const ExperimentConfig& cfg,
                                   const std::vector<double>& fractions = {0.125, 0.25, 0.5, 1.0});

/// Segmentation transfer through a depth proxy. Rows: adapted, direct,
/// proxy_on_target, source_in_domain.
ExperimentReport run_seg_transfer(const ExperimentConfig& cfg, const ProgressFn& progress = {});

/// Bernoulli success rate of a drive result: completion at the first
/// threshold.
double drive_success(const DriveMetrics& m);

}  // namespace tdl
