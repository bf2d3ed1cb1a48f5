#include "tdl/pipelines.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tdl/config.hpp"
#include "tdl/io.hpp"
#include "tdl/report.hpp"

namespace tdl {

namespace {

// Sub-seed keys. Changing one changes every downstream artifact.
enum SeedKey : uint64_t {
  key_source_data = 0x5d,
  key_target_data = 0x7d,
  key_test_data = 0x7e,
  key_source_test = 0x5e,
  key_holes = 0x40,
  key_corrupt_source = 0x41,
  key_corrupt_target = 0x42,
  key_corrupt_test = 0x43,
  key_eval = 0xe7a1,
  key_stage = 0x57,
};

uint64_t stage_seed(uint64_t seed, const std::string& stage) {
  Fnv1a h;
  h.update(stage.data(), stage.size());
  return derive_seed(seed, key_stage, h.digest());
}

TrainConfig train_config(const StageSettings& st, uint64_t seed, Modality input) {
  TrainConfig c;
  c.epochs = st.epochs;
  c.batch_size = st.batch_size;
  c.lr = st.lr;
  c.momentum = st.momentum;
  c.holdout_fraction = st.holdout_fraction;
  c.seed = seed;
  c.input = input;
  return c;
}

void check_sanity(const TrainReport& r, const StageSettings& st) {
  const double v = r.final_heldout();
  if (!std::isfinite(v)) throw StageError(r.stage, "non-finite final loss");
  if (v > st.max_heldout_loss) {
    throw StageError(r.stage, "final held-out loss " + std::to_string(v) + " exceeds the sanity bound " +
                                  std::to_string(st.max_heldout_loss));
  }
}

std::string fraction_key(double f) {
  if (f == 1.0) return "";
  std::ostringstream o;
  o << "@" << f;
  return o.str();
}

void check_fraction(double f) {
  if (!(f > 0.0 && f <= 1.0)) throw Error("data fraction must be within (0, 1], got " + std::to_string(f));
}

/// Presents a proxy label observation remapped through the class map, so a
/// proxy model trained on remapped labels can drive in the unmapped world.
Policy remapped_label_policy(const Model& policy, const ClassMap& map, std::string name) {
  const Modality in = policy.spec().input;
  if (!is_categorical(in)) throw ModalityError("label policy needs a categorical input");
  return {std::move(name), render_mask_for(in), [policy, map, in](const Sample& s) {
            const SegMap seg = remap(in == Modality::seg_map ? s.seg_map : s.seg_cam, map);
            const Observation obs = in == Modality::seg_map ? Observation::map_seg(seg) : Observation::camera_seg(seg);
            return denormalize_waypoints(predict_waypoints(policy, obs));
          }};
}

void set_column(Sample& s, Modality m, const SegMap& seg) {
  if (m == Modality::seg_map) s.seg_map = seg;
  else if (m == Modality::seg_camera) s.seg_cam = seg;
  else throw ModalityError("cannot store labels in modality " + std::string(to_string(m)));
}

}  // namespace

struct Experiment::State {
  ExperimentConfig cfg;
  std::string hash;
  std::optional<std::filesystem::path> cache;
  ProgressFn progress;

  std::optional<World> source_world, target_world;
  std::optional<Dataset> source_data;
  std::map<std::string, Dataset> target_data;  // by fraction key
  std::map<std::string, Model> models;
  std::map<std::string, TrainReport> reports;

  void say(const std::string& msg) const {
    if (progress) progress(msg);
  }

  std::optional<std::filesystem::path> cache_path(const std::string& name) const {
    if (!cache) return std::nullopt;
    return *cache / hash / name;
  }

  template <typename Train>
  const Model& stage(const std::string& name, const StageSettings& st, Train&& train) {
    if (auto it = models.find(name); it != models.end()) return it->second;
    const auto ckpt = cache_path(name + ".tdlc");
    const auto meta = cache_path(name + ".json");
    if (ckpt && std::filesystem::exists(*ckpt) && std::filesystem::exists(*meta)) {
      std::ifstream in(*meta);
      std::stringstream ss;
      ss << in.rdbuf();
      reports[name] = train_report_from_json(ss.str());
      reports[name].stage = name;
      say("stage " + name + ": loaded from cache");
      return models.emplace(name, read_checkpoint(*ckpt)).first->second;
    }
    say("stage " + name + ": training");
    auto [model, report] = train([this, name](const TrainReport& r) {
      std::ostringstream o;
      o << "  " << name << " epoch " << r.train_loss.size() << " train " << r.train_loss.back();
      if (!r.heldout_loss.empty()) o << " held-out " << r.heldout_loss.back();
      say(o.str());
    });
    report.stage = name;
    check_sanity(report, st);
    if (ckpt) {
      write_checkpoint(*ckpt, model);
      std::ofstream(*meta) << train_report_json(report) << '\n';
    }
    reports[name] = report;
    return models.emplace(name, std::move(model)).first->second;
  }
};

Experiment::Experiment(ExperimentConfig cfg, std::optional<std::filesystem::path> cache_dir, ProgressFn progress)
    : s_(std::make_unique<State>()) {
  validate(cfg);
  s_->hash = tdl::config_hash(cfg);
  s_->cfg = std::move(cfg);
  s_->cache = std::move(cache_dir);
  s_->progress = std::move(progress);
}

Experiment::~Experiment() = default;
Experiment::Experiment(Experiment&&) noexcept = default;
Experiment& Experiment::operator=(Experiment&&) noexcept = default;

const ExperimentConfig& Experiment::config() const { return s_->cfg; }
const std::string& Experiment::config_hash() const { return s_->hash; }

const World& Experiment::source_world() {
  if (!s_->source_world) s_->source_world = generate_world(s_->cfg.source);
  return *s_->source_world;
}

const World& Experiment::target_world() {
  if (!s_->target_world) s_->target_world = generate_world(s_->cfg.target);
  return *s_->target_world;
}

namespace {

DatasetOptions policy_data_options(const ExperimentConfig& cfg) {
  DatasetOptions o = cfg.data;
  o.mask = render_image | render_mask_for(cfg.proxy) | render_expert;
  return o;
}

}  // namespace

const Dataset& Experiment::source_data() {
  if (!s_->source_data) {
    const auto& cfg = s_->cfg;
    const auto path = s_->cache_path("source.tdl1");
    if (path && std::filesystem::exists(*path)) {
      s_->source_data = read_dataset(*path);
    } else {
      s_->say("generating " + std::to_string(cfg.source_n) + " source samples");
      Dataset d = generate_dataset(source_world(), cfg.source_n, derive_seed(cfg.seed, key_source_data),
                                   policy_data_options(cfg));
      remap_dataset(d, cfg.class_map);
      if (path) write_dataset(*path, d);
      s_->source_data = std::move(d);
    }
  }
  return *s_->source_data;
}

const Dataset& Experiment::target_data(double fraction) {
  check_fraction(fraction);
  const std::string key = fraction_key(fraction);
  if (auto it = s_->target_data.find(key); it != s_->target_data.end()) return it->second;
  if (fraction != 1.0) {
    const Dataset& full = target_data(1.0);
    const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(full.size())));
    if (n == 0) throw Error("data fraction " + std::to_string(fraction) + " leaves no target samples");
    return s_->target_data.emplace(key, Dataset(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n)))
        .first->second;
  }
  const auto& cfg = s_->cfg;
  const auto path = s_->cache_path("target.tdl1");
  Dataset d;
  if (path && std::filesystem::exists(*path)) {
    d = read_dataset(*path);
  } else {
    s_->say("generating " + std::to_string(cfg.target_n) + " target samples");
    d = generate_dataset(target_world(), cfg.target_n, derive_seed(cfg.seed, key_target_data), policy_data_options(cfg));
    if (path) write_dataset(*path, d);
  }
  return s_->target_data.emplace(key, std::move(d)).first->second;
}

const Model& Experiment::source_model() {
  const auto& cfg = s_->cfg;
  if (auto it = s_->models.find("source"); it != s_->models.end()) return it->second;
  const Dataset& data = source_data();
  return s_->stage("source", cfg.source_stage, [&](const EpochCallback& cb) {
    const uint64_t seed = stage_seed(cfg.seed, "source");
    return behavior_clone(waypoint_spec(Modality::image, seed, cfg.source_stage.widths), data,
                          train_config(cfg.source_stage, seed, Modality::image), cb);
  });
}

const Model& Experiment::proxy_model() {
  const auto& cfg = s_->cfg;
  if (auto it = s_->models.find("proxy"); it != s_->models.end()) return it->second;
  const Model& teacher = source_model();
  const Dataset& data = source_data();
  return s_->stage("proxy", cfg.proxy_stage, [&](const EpochCallback& cb) {
    const uint64_t seed = stage_seed(cfg.seed, "proxy");
    TrainConfig tc = train_config(cfg.proxy_stage, seed, cfg.proxy);
    tc.teacher_input = Modality::image;
    return distill(waypoint_spec(cfg.proxy, seed, cfg.proxy_stage.widths), &teacher, data, tc, cb);
  });
}

const Model& Experiment::source_recognizer() {
  const auto& cfg = s_->cfg;
  if (auto it = s_->models.find("source_recognizer"); it != s_->models.end()) return it->second;
  if (!is_categorical(cfg.proxy)) throw ModalityError("recognizers need a categorical proxy modality");
  const Dataset& data = source_data();
  return s_->stage("source_recognizer", cfg.recognizer_stage, [&](const EpochCallback& cb) {
    const uint64_t seed = stage_seed(cfg.seed, "source_recognizer");
    TrainConfig tc = train_config(cfg.recognizer_stage, seed, Modality::image);
    tc.label = cfg.proxy;
    return train_recognizer(segmentation_spec(Modality::image, cfg.proxy, seed, cfg.recognizer_stage.widths), data, tc,
                            cb);
  });
}

const Model& Experiment::proxy_model_predicted() {
  const auto& cfg = s_->cfg;
  if (auto it = s_->models.find("proxy_predicted"); it != s_->models.end()) return it->second;
  const Model& teacher = source_model();
  const Model& rec = source_recognizer();
  return s_->stage("proxy_predicted", cfg.proxy_stage, [&](const EpochCallback& cb) {
    Dataset data = source_data();
    std::vector<Observation> obs;
    for (const auto& s : data) obs.push_back(Observation::of(s.image));
    const auto preds = predict_segmentation(rec, obs);
    for (std::size_t i = 0; i < data.size(); ++i) set_column(data[i], cfg.proxy, preds[i]);
    // Same seed as the ground-truth proxy so the two differ only in labels.
    const uint64_t seed = stage_seed(cfg.seed, "proxy");
    TrainConfig tc = train_config(cfg.proxy_stage, seed, cfg.proxy);
    tc.teacher_input = Modality::image;
    return distill(waypoint_spec(cfg.proxy, seed, cfg.proxy_stage.widths), &teacher, data, tc, cb);
  });
}

const Model& Experiment::target_recognizer(double fraction) {
  const auto& cfg = s_->cfg;
  const std::string name = "target_recognizer" + fraction_key(fraction);
  if (auto it = s_->models.find(name); it != s_->models.end()) return it->second;
  if (!is_categorical(cfg.proxy)) throw ModalityError("recognizers need a categorical proxy modality");
  const Dataset& data = target_data(fraction);
  return s_->stage(name, cfg.recognizer_stage, [&](const EpochCallback& cb) {
    const uint64_t seed = stage_seed(cfg.seed, "target_recognizer");
    TrainConfig tc = train_config(cfg.recognizer_stage, seed, Modality::image);
    tc.label = cfg.proxy;
    return train_recognizer(segmentation_spec(Modality::image, cfg.proxy, seed, cfg.recognizer_stage.widths), data, tc,
                            cb);
  });
}

const Model& Experiment::target_model(double fraction) {
  const auto& cfg = s_->cfg;
  const std::string name = "target" + fraction_key(fraction);
  if (auto it = s_->models.find(name); it != s_->models.end()) return it->second;
  const Model& teacher = proxy_model();
  const Dataset& data = target_data(fraction);
  return s_->stage(name, cfg.target_stage, [&](const EpochCallback& cb) {
    const uint64_t seed = stage_seed(cfg.seed, "target");
    TrainConfig tc = train_config(cfg.target_stage, seed, Modality::image);
    tc.teacher_input = cfg.proxy;
    return distill(waypoint_spec(Modality::image, seed, cfg.target_stage.widths), &teacher, data, tc, cb);
  });
}

const TrainReport& Experiment::stage_report(const std::string& stage) const {
  const auto it = s_->reports.find(stage);
  if (it == s_->reports.end()) throw Error("stage '" + stage + "' has not run");
  return it->second;
}

DriveMetrics Experiment::evaluate(const World& world, const Policy& policy, const std::string& label) {
  const auto& p = s_->cfg.eval;
  EvalOptions eo;
  eo.episodes_per_controller = p.episodes_per_controller;
  eo.thresholds = p.thresholds;
  eo.episode.cap = p.cap;
  eo.episode.lighting_jitter = p.lighting_jitter;
  // Every policy faces the same spawn and lighting sequence.
  eo.seed = derive_seed(s_->cfg.seed, key_eval);
  s_->say("evaluating " + label);
  DriveMetrics m = evaluate_policy(world, policy, eo);
  std::ostringstream o;
  o << "  " << label << ": mean " << m.mean << " m, collisions " << m.collision_rate << ", off-road " << m.offroad_rate;
  s_->say(o.str());
  return m;
}

Provenance Experiment::provenance() const { return {s_->hash, s_->cfg.seed, std::string(code_version())}; }

double drive_success(const DriveMetrics& m) {
  if (m.completion.empty()) throw Error("drive_success: no completion thresholds");
  return m.completion.front();
}

namespace {

ExperimentReport base_report(Experiment& ex, std::string method, std::initializer_list<std::string> stages) {
  ExperimentReport r;
  r.experiment = ex.config().name;
  r.method = std::move(method);
  r.provenance = ex.provenance();
  for (const auto& s : stages) r.stages.push_back(ex.stage_report(s));
  return r;
}

}  // namespace

ExperimentReport run_direct(Experiment& ex) {
  const Model& fs = ex.source_model();
  ExperimentReport r = base_report(ex, "direct", {"source"});
  r.drive = ex.evaluate(ex.target_world(), model_policy(fs, "direct"), "direct");
  return r;
}

ExperimentReport run_task_distillation(Experiment& ex) {
  const Model& ft = ex.target_model();
  ExperimentReport r = base_report(ex, "task_distillation", {"source", "proxy", "target"});
  r.drive = ex.evaluate(ex.target_world(), model_policy(ft, "task_distillation"), "task distillation");
  return r;
}

ExperimentReport run_modular(Experiment& ex, RecognizerTraining training) {
  const bool predicted = training == RecognizerTraining::predicted_in_source;
  const Model& policy = predicted ? ex.proxy_model_predicted() : ex.proxy_model();
  const Model& rec = ex.target_recognizer();
  const std::string method = predicted ? "modular_predicted" : "modular";
  ExperimentReport r = predicted
                           ? base_report(ex, method, {"source", "source_recognizer", "proxy_predicted", "target_recognizer"})
                           : base_report(ex, method, {"source", "proxy", "target_recognizer"});
  r.drive = ex.evaluate(ex.target_world(), modular_policy(rec, policy, method), method);
  return r;
}

ExperimentReport run_data_ablation(Experiment& ex, const std::vector<double>& fractions) {
  if (fractions.empty()) throw Error("data ablation needs at least one fraction");
  ExperimentReport r;
  r.experiment = ex.config().name;
  r.method = "data_ablation";
  r.provenance = ex.provenance();
  const Model& fp = ex.proxy_model();
  r.stages = {ex.stage_report("source"), ex.stage_report("proxy")};
  for (double f : fractions) {
    check_fraction(f);
    const Model& ft = ex.target_model(f);
    const Model& rec = ex.target_recognizer(f);
    const std::string key = fraction_key(f);
    r.stages.push_back(ex.stage_report("target" + key));
    r.stages.push_back(ex.stage_report("target_recognizer" + key));
    AblationRow row;
    row.fraction = f;
    row.target_samples = static_cast<int>(ex.target_data(f).size());
    row.distill_mean = ex.evaluate(ex.target_world(), model_policy(ft), "distill" + key).mean;
    row.modular_mean = ex.evaluate(ex.target_world(), modular_policy(rec, fp), "modular" + key).mean;
    row.recognizer_miou = ex.stage_report("target_recognizer" + key).heldout_miou.value_or(0.0);
    r.ablation.push_back(row);
  }
  return r;
}

std::vector<ExperimentReport> run_policy_transfer(Experiment& ex) {
  std::vector<ExperimentReport> out;
  out.push_back(run_direct(ex));
  out.push_back(run_modular(ex, RecognizerTraining::ground_truth));
  out.push_back(run_modular(ex, RecognizerTraining::predicted_in_source));
  out.push_back(run_task_distillation(ex));
  const auto& cfg = ex.config();
  if (cfg.measure_factors) {
    FactorMeasurements m;
    m.source_success =
        drive_success(ex.evaluate(ex.source_world(), model_policy(ex.source_model(), "source"), "f^S in source"));
    m.proxy_success = drive_success(
        ex.evaluate(ex.source_world(), remapped_label_policy(ex.proxy_model(), cfg.class_map, "proxy"), "f^P in source"));
    m.proxy_target_success =
        drive_success(ex.evaluate(ex.target_world(), oracle_label_policy(ex.proxy_model(), "proxy_target"),
                                  "f^P on target labels"));
    m.distilled_success = drive_success(*out.back().drive);
    m.recognizer_target_miou = ex.stage_report("target_recognizer").heldout_miou.value_or(0.0);
    m.label_overlap = estimate_label_overlap(ex.source_data(), ex.target_data(), cfg.proxy);
    m.image_overlap = estimate_image_overlap(ex.source_data(), ex.target_data());
    const AccuracyFactors f = measure_factors(m);
    for (auto& r : out) {
      r.factors = f;
      r.measurements = m;
    }
  }
  return out;
}

ExperimentReport run_task_distillation(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  return run_task_distillation(ex);
}

ExperimentReport run_direct(const ExperimentConfig& cfg) {
  Experiment ex(cfg);
  return run_direct(ex);
}

ExperimentReport run_modular(const ExperimentConfig& cfg, RecognizerTraining training) {
  Experiment ex(cfg);
  return run_modular(ex, training);
}

ExperimentReport run_data_ablation(const ExperimentConfig& cfg, const std::vector<double>& fractions) {
  Experiment ex(cfg);
  return run_data_ablation(ex, fractions);
}

ExperimentReport run_seg_transfer(const ExperimentConfig& cfg, const ProgressFn& progress) {
  validate(cfg);
  auto say = [&](const std::string& m) {
    if (progress) progress(m);
  };
  const Modality label = Modality::seg_camera;
  const World sw = generate_world(cfg.source);
  const World tw = generate_world(cfg.target);
  DatasetOptions opts = cfg.data;
  opts.mask = render_image | render_seg_cam | render_depth;

  say("generating seg-transfer datasets");
  Dataset sd = generate_dataset(sw, cfg.source_n, derive_seed(cfg.seed, key_source_data), opts);
  Dataset td = generate_dataset(tw, cfg.target_n, derive_seed(cfg.seed, key_target_data), opts);
  Dataset test = generate_dataset(tw, cfg.test_n, derive_seed(cfg.seed, key_test_data), opts);
  Dataset source_test = generate_dataset(sw, cfg.test_n, derive_seed(cfg.seed, key_source_test), opts);
  remap_dataset(sd, cfg.class_map);
  remap_dataset(source_test, cfg.class_map);

  NoiseSpec noise;
  noise.hole_rate = cfg.noise.hole_rate;
  noise.mult_noise_sigma = cfg.noise.sigma;
  if (cfg.noise.hole_pool > 0) {
    noise.hole_mask_pool =
        synthetic_hole_masks(cfg.noise.hole_pool, kImageHeight, kImageWidth, derive_seed(cfg.seed, key_holes));
  }
  corrupt_dataset_depth(td, noise, derive_seed(cfg.seed, key_corrupt_target));
  corrupt_dataset_depth(test, noise, derive_seed(cfg.seed, key_corrupt_test));
  if (cfg.noise.augment_source) corrupt_dataset_depth(sd, noise, derive_seed(cfg.seed, key_corrupt_source));

  auto log = [&](const std::string& stage) {
    return [&say, stage](const TrainReport& r) {
      std::ostringstream o;
      o << "  " << stage << " epoch " << r.train_loss.size() << " train " << r.train_loss.back();
      if (!r.heldout_loss.empty()) o << " held-out " << r.heldout_loss.back();
      say(o.str());
    };
  };
  auto finish = [](TrainReport r, const std::string& stage, const StageSettings& st) {
    r.stage = stage;
    check_sanity(r, st);
    return r;
  };

  ExperimentReport report;
  report.experiment = cfg.name;
  report.method = "seg_transfer";
  report.provenance = {config_hash(cfg), cfg.seed, std::string(code_version())};

  say("stage source: training");
  const uint64_t s_seed = stage_seed(cfg.seed, "source");
  TrainConfig tc = train_config(cfg.source_stage, s_seed, Modality::image);
  tc.label = label;
  auto [fs, rs] = train_recognizer(segmentation_spec(Modality::image, label, s_seed, cfg.source_stage.widths), sd, tc,
                                   log("source"));
  report.stages.push_back(finish(rs, "source", cfg.source_stage));

  say("stage proxy: training");
  const uint64_t p_seed = stage_seed(cfg.seed, "proxy");
  TrainConfig pc = train_config(cfg.proxy_stage, p_seed, Modality::depth);
  pc.teacher_input = Modality::image;
  auto [fp, rp] = distill(segmentation_spec(Modality::depth, label, p_seed, cfg.proxy_stage.widths), &fs, sd, pc,
                          log("proxy"));
  report.stages.push_back(finish(rp, "proxy", cfg.proxy_stage));

  say("stage target: training");
  const uint64_t t_seed = stage_seed(cfg.seed, "target");
  TrainConfig ttc = train_config(cfg.target_stage, t_seed, Modality::image);
  ttc.teacher_input = Modality::depth;
  auto [ft, rt] = distill(segmentation_spec(Modality::image, label, t_seed, cfg.target_stage.widths), &fp, td, ttc,
                          log("target"));
  report.stages.push_back(finish(rt, "target", cfg.target_stage));

  report.seg.emplace_back("adapted", evaluate_segmentation(ft, test, label));
  report.seg.emplace_back("direct", evaluate_segmentation(fs, test, label));
  report.seg.emplace_back("proxy_on_target", evaluate_segmentation(fp, test, label));
  report.seg.emplace_back("source_in_domain", evaluate_segmentation(fs, source_test, label));
  for (const auto& [name, m] : report.seg) {
    std::ostringstream o;
    o << "  " << name << " mIoU " << m.miou;
    say(o.str());
  }
  return report;
}

}  // namespace tdl
