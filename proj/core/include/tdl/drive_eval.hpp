#pragma once

// Closed-loop evaluation: waypoint-tracking PID, episode runner, and the
// distance / completion-rate metric suite.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdl/models.hpp"
#include "tdl/worlds.hpp"

namespace tdl {

struct PIDGains {
  double kp = 1.0;
  double ki = 0.0;
  double kd = 0.1;
  int lookahead = 3;  // 1-based waypoint index

  friend bool operator==(const PIDGains&, const PIDGains&) = default;
};

void validate(const PIDGains& g);

/// kp in {1.0, 1.6, 2.0, 2.6, 3.2}, kd = 0.1 kp, ki = 0, lookahead 3. The
/// weakest gain still holds a 6 m corner radius at cruise speed.
std::vector<PIDGains> default_controllers();

/// Signed bearing of an ego-frame point; positive to the left.
double bearing(Vec2 ego);

/// Stateful steering PID on the bearing to the lookahead waypoint; throttle
/// holds the fixed cruise speed.
class PidController {
 public:
  explicit PidController(PIDGains gains, double dt = kDefaultDt) : gains_(gains), dt_(dt) {}
  Control operator()(const Waypoints& metres);
  void reset();

 private:
  PIDGains gains_;
  double dt_;
  double integral_ = 0.0;
  double previous_ = 0.0;
  bool has_previous_ = false;
};

/// Single stateless evaluation (no derivative history).
Control pid_control(const Waypoints& metres, const PIDGains& gains);

/// A driving policy: which modalities it needs rendered, and the map from a
/// rendered sample to waypoints in metres.
struct Policy {
  std::string name;
  uint32_t mask = render_image;
  std::function<Waypoints(const Sample&)> act;
};

Policy expert_policy();
/// Waypoint model reading its declared input modality.
Policy model_policy(const Model& model, std::string name = "model");
/// Recognizer (image -> labels) composed with a label-input waypoint model.
Policy modular_policy(const Model& recognizer, const Model& policy, std::string name = "modular");
/// Label-input waypoint model fed ground-truth labels.
Policy oracle_label_policy(const Model& policy, std::string name = "oracle");

enum class Termination : uint8_t { infraction, timeout };
enum class Infraction : uint8_t { none, collision, offroad };
std::string_view to_string(Termination t);
std::string_view to_string(Infraction i);

struct EpisodeResult {
  double distance = 0.0;
  Termination terminated_by = Termination::timeout;
  Infraction infraction = Infraction::none;
  uint64_t seed = 0;
  int steps = 0;
  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

struct EpisodeOptions {
  int cap = 2000;
  double lighting_jitter = 0.2;  // per-episode lighting drawn from 1 +- jitter
};

EpisodeResult run_episode(const World& world, const Policy& policy, const PIDGains& gains, uint64_t seed,
                          const EpisodeOptions& opts = {});

std::vector<double> default_thresholds();

struct DriveMetrics {
  double mean = 0.0;  // mean over controllers of per-controller mean distance
  double std = 0.0;   // population std over controller means
  double min = 0.0;   // min / max over controller means
  double max = 0.0;
  std::vector<double> thresholds;
  std::vector<double> completion;  // fraction of all episodes reaching each threshold
  double collision_rate = 0.0;
  double offroad_rate = 0.0;
  std::vector<double> controller_means;
  std::vector<EpisodeResult> episodes;
};

/// Aggregates episodes grouped by controller (equal-sized groups in order).
DriveMetrics aggregate(const std::vector<EpisodeResult>& episodes, int controllers, std::vector<double> thresholds);

struct EvalOptions {
  std::vector<PIDGains> controllers = default_controllers();
  int episodes_per_controller = 25;
  std::vector<double> thresholds = default_thresholds();
  EpisodeOptions episode;
  uint64_t seed = 0;
};

/// Episode (c, e) uses seed derive_seed(opts.seed, c, e).
DriveMetrics evaluate_policy(const World& world, const Policy& policy, const EvalOptions& opts = {});

}  // namespace tdl
