#include "tdl/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace tdl {

namespace {

constexpr std::size_t kEvalBatch = 64;

enum class Objective { l1, softmax_l1, cross_entropy };

const SegMap& label_raster(const Sample& s, Modality m) {
  if (m == Modality::seg_camera) return s.seg_cam;
  if (m == Modality::seg_map) return s.seg_map;
  throw ModalityError("label modality must be seg_camera or seg_map, got " + std::string(to_string(m)));
}

bool present(const Sample& s, Modality m) {
  switch (m) {
    case Modality::image: return !s.image.rgb.empty();
    case Modality::seg_camera: return !s.seg_cam.ids.empty();
    case Modality::seg_map: return !s.seg_map.ids.empty();
    case Modality::depth: return !s.depth.meters.empty();
  }
  return false;
}

void require(const Dataset& data, Modality m, const char* role) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!present(data[i], m)) {
      throw ModalityError(std::string(role) + " modality " + std::string(to_string(m)) + " absent from sample " +
                          std::to_string(i));
    }
  }
}

Shape output_shape(const ModelSpec& spec) {
  if (spec.head.kind == HeadKind::waypoints) return {spec.head.num_waypoints, 2};
  const int oh = spec.head.out_height ? spec.head.out_height : spec.in_height;
  const int ow = spec.head.out_width ? spec.head.out_width : spec.in_width;
  return {oh, ow, spec.head.num_classes};
}

struct Targets {
  std::vector<float> values;  // per-sample blocks of `per`
  std::vector<int> labels;    // cross-entropy targets
  std::size_t per = 0;
};

Tensor forward_batch(const Model& m, const Dataset& data, std::span<const std::size_t> idx, Modality input) {
  std::vector<Observation> obs;
  obs.reserve(idx.size());
  for (std::size_t i : idx) obs.push_back(Observation::from_sample(data[i], input));
  return m.forward(m.encode(obs));
}

Targets teacher_targets(const ModelSpec& student, const Model* teacher, const Dataset& data, const TrainConfig& cfg,
                        Objective objective) {
  Targets t;
  const Shape shape = output_shape(student);
  t.per = static_cast<std::size_t>(shape_numel(shape));
  const bool seg = student.head.kind == HeadKind::segmentation;

  if (objective == Objective::cross_entropy) {
    t.per = static_cast<std::size_t>(shape[0] * shape[1]);
    t.labels.reserve(t.per * data.size());
    for (const auto& s : data) {
      const SegMap& lab = label_raster(s, cfg.label);
      if (lab.height != shape[0] || lab.width != shape[1]) {
        throw ShapeError("label raster " + std::to_string(lab.height) + "x" + std::to_string(lab.width) +
                         " does not match model output " + shape_str(shape));
      }
      for (uint8_t id : lab.ids) {
        if (id >= shape[2]) throw Error("label id " + std::to_string(id) + " outside the model's class set");
        t.labels.push_back(id);
      }
    }
    return t;
  }

  t.values.reserve(t.per * data.size());
  if (teacher) {
    if (!cfg.teacher_input) throw Error("distill: a teacher model needs cfg.teacher_input");
    if (teacher->spec().input != *cfg.teacher_input) {
      throw ModalityError("teacher consumes " + std::string(to_string(teacher->spec().input)) + " but cfg feeds " +
                          std::string(to_string(*cfg.teacher_input)));
    }
    if (output_shape(teacher->spec()) != shape || teacher->spec().head.kind != student.head.kind) {
      throw ShapeError("teacher output " + shape_str(output_shape(teacher->spec())) + " differs from student head " +
                       shape_str(shape));
    }
    require(data, *cfg.teacher_input, "teacher");
    NoGradGuard no_grad;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
      idx.clear();
      for (std::size_t i = start; i < std::min(data.size(), start + kEvalBatch); ++i) idx.push_back(i);
      Tensor out = forward_batch(*teacher, data, idx, *cfg.teacher_input);
      if (seg) out = softmax_channels(out);
      for (double v : out.data()) t.values.push_back(static_cast<float>(v));
    }
    return t;
  }

  if (cfg.teacher_input) throw Error("distill: cfg.teacher_input is set but no teacher model was given");
  if (!seg) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& pts = data[i].expert.points;
      if (static_cast<int64_t>(pts.size()) != shape[0]) {
        throw ShapeError("sample " + std::to_string(i) + " has " + std::to_string(pts.size()) +
                         " expert waypoints, head expects " + std::to_string(shape[0]));
      }
      for (Vec2 p : pts) {
        t.values.push_back(static_cast<float>(p.x / kWaypointHorizon));
        t.values.push_back(static_cast<float>(p.y / kWaypointHorizon));
      }
    }
    return t;
  }
  for (const auto& s : data) {
    const SegMap& lab = label_raster(s, cfg.label);
    if (lab.height != shape[0] || lab.width != shape[1]) {
      throw ShapeError("label raster does not match model output " + shape_str(shape));
    }
    const std::size_t base = t.values.size();
    t.values.resize(base + t.per, 0.0f);
    for (std::size_t p = 0; p < lab.ids.size(); ++p) {
      if (lab.ids[p] >= shape[2]) throw Error("label id outside the model's class set");
      t.values[base + p * static_cast<std::size_t>(shape[2]) + lab.ids[p]] = 1.0f;
    }
  }
  return t;
}

Tensor batch_loss(const Tensor& out, const Targets& t, std::span<const std::size_t> idx, Objective objective) {
  if (objective == Objective::cross_entropy) {
    std::vector<int> labels;
    labels.reserve(idx.size() * t.per);
    for (std::size_t i : idx) labels.insert(labels.end(), t.labels.begin() + static_cast<std::ptrdiff_t>(i * t.per),
                                            t.labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.per));
    return cross_entropy(out, labels);
  }
  std::vector<double> target;
  target.reserve(idx.size() * t.per);
  for (std::size_t i : idx) {
    target.insert(target.end(), t.values.begin() + static_cast<std::ptrdiff_t>(i * t.per),
                  t.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * t.per));
  }
  const Tensor pred = objective == Objective::softmax_l1 ? softmax_channels(out) : out;
  return l1_loss(pred, Tensor::from(pred.shape(), std::move(target)));
}

double eval_loss(const Model& m, const Dataset& data, std::span<const std::size_t> idx, Modality input,
                 const Targets& t, Objective objective) {
  NoGradGuard no_grad;
  double sum = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const auto chunk = idx.subspan(start, std::min(kEvalBatch, idx.size() - start));
    sum += batch_loss(forward_batch(m, data, chunk, input), t, chunk, objective).item() * static_cast<double>(chunk.size());
  }
  return sum / static_cast<double>(idx.size());
}

SegMetrics eval_segmentation(const Model& m, const Dataset& data, std::span<const std::size_t> idx, Modality label) {
  NoGradGuard no_grad;
  Confusion conf(m.spec().head.num_classes);
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const auto chunk = idx.subspan(start, std::min(kEvalBatch, idx.size() - start));
    const auto preds = argmax_segmentation(forward_batch(m, data, chunk, m.spec().input));
    for (std::size_t k = 0; k < chunk.size(); ++k) conf.add(preds[k], label_raster(data[chunk[k]], label));
  }
  return seg_metrics(conf);
}

std::pair<Model, TrainReport> train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                                    Objective objective, const Targets& targets, std::string stage,
                                    const EpochCallback& on_epoch) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.stage = std::move(stage);
  Model model(spec);
  Sgd opt(model.parameters(), cfg.lr, cfg.momentum);
  auto [train_idx, held_idx] = split_indices(data.size(), cfg.holdout_fraction, cfg.seed);
  report.train_count = static_cast<int>(train_idx.size());
  report.heldout_count = static_cast<int>(held_idx.size());

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0xe90c, static_cast<uint64_t>(epoch)));
    for (std::size_t i = train_idx.size(); i > 1; --i) std::swap(train_idx[i - 1], train_idx[rng.below(i)]);
    double sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += bs) {
      const auto chunk = std::span<const std::size_t>(train_idx).subspan(start, std::min(bs, train_idx.size() - start));
      const Tensor loss = batch_loss(forward_batch(model, data, chunk, cfg.input), targets, chunk, objective);
      const double v = loss.item();
      if (!std::isfinite(v)) throw StageError(report.stage, "non-finite training loss in epoch " + std::to_string(epoch));
      sum += v * static_cast<double>(chunk.size());
      backward(loss);
      opt.step();
    }
    report.train_loss.push_back(train_idx.empty() ? 0.0 : sum / static_cast<double>(train_idx.size()));
    if (!held_idx.empty()) report.heldout_loss.push_back(eval_loss(model, data, held_idx, cfg.input, targets, objective));
    if (on_epoch) on_epoch(report);
  }
  if (objective == Objective::cross_entropy && !held_idx.empty()) {
    report.heldout_miou = eval_segmentation(model, data, held_idx, cfg.label).miou;
  }
  report.checksum = model.checksum();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw Error("epochs must be >= 0");
  if (cfg.batch_size <= 0) throw Error("batch size must be positive");
  if (!(cfg.lr > 0.0 && std::isfinite(cfg.lr))) throw Error("learning rate must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw Error("momentum must be within [0,1)");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) throw Error("holdout fraction must be within [0,1)");
}

double TrainReport::final_heldout() const {
  if (!heldout_loss.empty()) return heldout_loss.back();
  return train_loss.empty() ? 0.0 : train_loss.back();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double holdout_fraction,
                                                                            uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x5711));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  const auto held = static_cast<std::size_t>(std::floor(static_cast<double>(n) * holdout_fraction));
  std::vector<std::size_t> heldout(perm.end() - static_cast<std::ptrdiff_t>(held), perm.end());
  perm.resize(n - held);
  return {std::move(perm), std::move(heldout)};
}

std::pair<Model, TrainReport> distill(const ModelSpec& student_spec, const Model* teacher, const Dataset& data,
                                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  validate(student_spec);
  if (data.empty()) throw Error("distill: empty dataset");
  if (student_spec.input != cfg.input) {
    throw ModalityError("student spec consumes " + std::string(to_string(student_spec.input)) + " but cfg feeds " +
                        std::string(to_string(cfg.input)));
  }
  require(data, cfg.input, "student");
  const Objective objective = student_spec.head.kind == HeadKind::segmentation ? Objective::softmax_l1 : Objective::l1;
  const Targets targets = teacher_targets(student_spec, teacher, data, cfg, objective);
  return train(student_spec, data, cfg, objective, targets, teacher ? "distill" : "behavior_clone", on_epoch);
}

std::pair<Model, TrainReport> behavior_clone(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                                             const EpochCallback& on_epoch) {
  if (spec.head.kind != HeadKind::waypoints) throw Error("behavior_clone needs a waypoint head");
  TrainConfig c = cfg;
  c.teacher_input.reset();
  return distill(spec, nullptr, data, c, on_epoch);
}

std::pair<Model, TrainReport> train_recognizer(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg,
                                               const EpochCallback& on_epoch) {
  validate(cfg);
  validate(spec);
  if (spec.head.kind != HeadKind::segmentation) throw Error("train_recognizer needs a segmentation head");
  if (data.empty()) throw Error("train_recognizer: empty dataset");
  if (spec.input != cfg.input) throw ModalityError("recognizer spec input differs from cfg input");
  require(data, cfg.input, "recognizer input");
  require(data, cfg.label, "label");
  const Targets targets = teacher_targets(spec, nullptr, data, cfg, Objective::cross_entropy);
  return train(spec, data, cfg, Objective::cross_entropy, targets, "recognizer", on_epoch);
}

SegMetrics evaluate_segmentation(const Model& model, const Dataset& data, Modality label) {
  if (data.empty()) throw Error("evaluate_segmentation: empty dataset");
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return eval_segmentation(model, data, idx, label);
}

double waypoint_disagreement(const Model& a, Modality a_input, const Model& b, Modality b_input, const Dataset& data) {
  if (data.empty()) throw Error("waypoint_disagreement: empty dataset");
  NoGradGuard no_grad;
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kEvalBatch); ++i) idx.push_back(i);
    const Tensor oa = forward_batch(a, data, idx, a_input);
    const Tensor ob = forward_batch(b, data, idx, b_input);
    if (oa.shape() != ob.shape()) throw ShapeError("waypoint models disagree in output shape");
    for (int64_t i = 0; i < oa.numel(); ++i) sum += std::abs(oa[i] - ob[i]);
    count += static_cast<std::size_t>(oa.numel());
  }
  return sum / static_cast<double>(count);
}

}  // namespace tdl
