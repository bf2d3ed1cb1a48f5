#include "tdl/drive_eval.hpp"

#include <algorithm>
#include <cmath>

namespace tdl {

void validate(const PIDGains& g) {
  if (!std::isfinite(g.kp) || !std::isfinite(g.ki) || !std::isfinite(g.kd)) throw Error("PID gains must be finite");
  if (g.ki < 0.0) throw Error("PID ki must be >= 0");
  if (g.lookahead < 1 || g.lookahead > kNumWaypoints) {
    throw Error("PID lookahead must be within [1, " + std::to_string(kNumWaypoints) + "]");
  }
}

std::vector<PIDGains> default_controllers() {
  std::vector<PIDGains> out;
  for (double kp : {1.0, 1.6, 2.0, 2.6, 3.2}) out.push_back({kp, 0.0, 0.1 * kp, 3});
  return out;
}

double bearing(Vec2 ego) { return std::atan2(-ego.x, ego.y); }

namespace {

double lookahead_error(const Waypoints& w, int lookahead) {
  if (w.points.empty()) return 0.0;
  const auto i = static_cast<std::size_t>(std::clamp(lookahead, 1, static_cast<int>(w.points.size())) - 1);
  return bearing(w.points[i]);
}

}  // namespace

Control PidController::operator()(const Waypoints& metres) {
  const double e = lookahead_error(metres, gains_.lookahead);
  integral_ += e * dt_;
  const double derivative = has_previous_ ? (e - previous_) / dt_ : 0.0;
  previous_ = e;
  has_previous_ = true;
  const double u = gains_.kp * e + gains_.ki * integral_ + gains_.kd * derivative;
  return {std::clamp(u, -1.0, 1.0), 1.0};
}

void PidController::reset() {
  integral_ = 0.0;
  previous_ = 0.0;
  has_previous_ = false;
}

Control pid_control(const Waypoints& metres, const PIDGains& gains) { return PidController(gains)(metres); }

Policy expert_policy() { return {"expert", render_expert, [](const Sample& s) { return s.expert; }}; }

Policy model_policy(const Model& model, std::string name) {
  if (model.spec().head.kind != HeadKind::waypoints) throw Error("model_policy needs a waypoint head");
  const Modality in = model.spec().input;
  return {std::move(name), render_mask_for(in), [model, in](const Sample& s) {
            return denormalize_waypoints(predict_waypoints(model, Observation::from_sample(s, in)));
          }};
}

Policy modular_policy(const Model& recognizer, const Model& policy, std::string name) {
  if (recognizer.spec().head.kind != HeadKind::segmentation) throw Error("modular_policy: recognizer has no segmentation head");
  if (policy.spec().head.kind != HeadKind::waypoints) throw Error("modular_policy: policy has no waypoint head");
  const Modality in = policy.spec().input;
  if (!is_categorical(in)) throw ModalityError("modular_policy: policy must read segmentation labels");
  const int oh = recognizer.spec().head.out_height ? recognizer.spec().head.out_height : recognizer.spec().in_height;
  const int ow = recognizer.spec().head.out_width ? recognizer.spec().head.out_width : recognizer.spec().in_width;
  if (oh != policy.spec().in_height || ow != policy.spec().in_width) {
    throw ShapeError("modular_policy: recognizer output does not match the policy input raster");
  }
  const Modality rin = recognizer.spec().input;
  return {std::move(name), render_mask_for(rin), [recognizer, policy, rin, in](const Sample& s) {
            const SegMap seg = predict_segmentation(recognizer, Observation::from_sample(s, rin));
            const Observation obs = in == Modality::seg_map ? Observation::map_seg(seg) : Observation::camera_seg(seg);
            return denormalize_waypoints(predict_waypoints(policy, obs));
          }};
}

Policy oracle_label_policy(const Model& policy, std::string name) { return model_policy(policy, std::move(name)); }

std::string_view to_string(Termination t) { return t == Termination::timeout ? "timeout" : "infraction"; }

std::string_view to_string(Infraction i) {
  switch (i) {
    case Infraction::none: return "none";
    case Infraction::collision: return "collision";
    case Infraction::offroad: return "offroad";
  }
  return "?";
}

EpisodeResult run_episode(const World& world, const Policy& policy, const PIDGains& gains, uint64_t seed,
                          const EpisodeOptions& opts) {
  validate(gains);
  Rng rng(derive_seed(seed, 1));
  RenderOptions ro;
  ro.mask = policy.mask;
  ro.lighting = 1.0 + rng.uniform(-1.0, 1.0) * opts.lighting_jitter;
  AgentState state = spawn_pose(world, derive_seed(seed, 2));
  state.odometer = 0.0;
  PidController pid(gains);
  EpisodeResult result;
  result.seed = seed;
  for (int i = 0; i < opts.cap; ++i) {
    const Sample obs = render(world, state, ro);
    const StepResult r = step(world, state, pid(policy.act(obs)));
    state = r.state;
    ++result.steps;
    if (r.events.any()) {
      result.terminated_by = Termination::infraction;
      result.infraction = r.events.collision ? Infraction::collision : Infraction::offroad;
      break;
    }
  }
  result.distance = state.odometer;
  return result;
}

std::vector<double> default_thresholds() { return {50.0, 100.0, 200.0, 400.0}; }

DriveMetrics aggregate(const std::vector<EpisodeResult>& episodes, int controllers, std::vector<double> thresholds) {
  DriveMetrics m;
  m.thresholds = std::move(thresholds);
  m.episodes = episodes;
  if (controllers <= 0) throw Error("aggregate: controller count must be positive");
  if (episodes.empty()) {
    m.completion.assign(m.thresholds.size(), 0.0);
    return m;
  }
  if (episodes.size() % static_cast<std::size_t>(controllers) != 0) {
    throw Error("aggregate: episodes do not split evenly across controllers");
  }
  const std::size_t per = episodes.size() / static_cast<std::size_t>(controllers);
  for (int c = 0; c < controllers; ++c) {
    double sum = 0.0;
    for (std::size_t e = 0; e < per; ++e) sum += episodes[static_cast<std::size_t>(c) * per + e].distance;
    m.controller_means.push_back(sum / static_cast<double>(per));
  }
  double sum = 0.0;
  for (double v : m.controller_means) sum += v;
  m.mean = sum / controllers;
  double var = 0.0;
  for (double v : m.controller_means) var += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(var / controllers);
  m.min = *std::min_element(m.controller_means.begin(), m.controller_means.end());
  m.max = *std::max_element(m.controller_means.begin(), m.controller_means.end());
  for (double t : m.thresholds) {
    const auto hits = std::count_if(episodes.begin(), episodes.end(), [t](const EpisodeResult& r) { return r.distance >= t; });
    m.completion.push_back(static_cast<double>(hits) / static_cast<double>(episodes.size()));
  }
  const auto n = static_cast<double>(episodes.size());
  m.collision_rate = static_cast<double>(std::count_if(episodes.begin(), episodes.end(), [](const EpisodeResult& r) {
                       return r.infraction == Infraction::collision;
                     })) / n;
  m.offroad_rate = static_cast<double>(std::count_if(episodes.begin(), episodes.end(), [](const EpisodeResult& r) {
                     return r.infraction == Infraction::offroad;
                   })) / n;
  return m;
}

DriveMetrics evaluate_policy(const World& world, const Policy& policy, const EvalOptions& opts) {
  if (opts.controllers.empty()) throw Error("evaluate_policy: no controllers");
  if (opts.episodes_per_controller <= 0) throw Error("evaluate_policy: episodes per controller must be positive");
  std::vector<EpisodeResult> episodes;
  for (std::size_t c = 0; c < opts.controllers.size(); ++c) {
    for (int e = 0; e < opts.episodes_per_controller; ++e) {
      episodes.push_back(run_episode(world, policy, opts.controllers[c], derive_seed(opts.seed, c, static_cast<uint64_t>(e)),
                                     opts.episode));
    }
  }
  return aggregate(episodes, static_cast<int>(opts.controllers.size()), opts.thresholds);
}

}  // namespace tdl
