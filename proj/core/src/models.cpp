#include "tdl/models.hpp"

#include <algorithm>
#include <cmath>

namespace tdl {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::image: return "image";
    case Modality::seg_camera: return "seg_cam";
    case Modality::seg_map: return "seg_map";
    case Modality::depth: return "depth";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "image") return Modality::image;
  if (s == "seg_cam" || s == "seg_camera") return Modality::seg_camera;
  if (s == "seg_map") return Modality::seg_map;
  if (s == "depth") return Modality::depth;
  throw Error("unknown modality '" + std::string(s) + "'");
}

bool is_categorical(Modality m) { return m == Modality::seg_camera || m == Modality::seg_map; }

int modality_channels(Modality m) {
  switch (m) {
    case Modality::image: return 3;
    case Modality::seg_camera:
    case Modality::seg_map: return kNumClasses;
    case Modality::depth: return 2;
  }
  return 0;
}

int modality_height(Modality m) { return m == Modality::seg_map ? kMapSize : kImageHeight; }
int modality_width(Modality m) { return m == Modality::seg_map ? kMapSize : kImageWidth; }

ModelSpec waypoint_spec(Modality input, uint64_t seed, std::array<int, 4> widths) {
  ModelSpec s;
  s.input = input;
  s.in_height = modality_height(input);
  s.in_width = modality_width(input);
  s.in_channels = modality_channels(input);
  s.head.kind = HeadKind::waypoints;
  s.widths = widths;
  s.seed = seed;
  return s;
}

ModelSpec segmentation_spec(Modality input, Modality output_raster, uint64_t seed, std::array<int, 4> widths) {
  ModelSpec s = waypoint_spec(input, seed, widths);
  s.head.kind = HeadKind::segmentation;
  s.head.out_height = modality_height(output_raster);
  s.head.out_width = modality_width(output_raster);
  return s;
}

void validate(const ModelSpec& spec) {
  auto fail = [](const std::string& what) { throw ShapeError("model spec: " + what); };
  if (spec.in_height <= 0 || spec.in_width <= 0 || spec.in_height % 16 || spec.in_width % 16) {
    fail("input " + std::to_string(spec.in_height) + "x" + std::to_string(spec.in_width) +
         " must be positive multiples of 16");
  }
  if (spec.in_channels != modality_channels(spec.input)) {
    fail("modality " + std::string(to_string(spec.input)) + " encodes to " +
         std::to_string(modality_channels(spec.input)) + " channels, spec says " + std::to_string(spec.in_channels));
  }
  for (int w : spec.widths) {
    if (w <= 0) fail("channel widths must be positive");
  }
  if (spec.hidden <= 0) fail("hidden width must be positive");
  if (spec.head.kind == HeadKind::waypoints) {
    if (spec.head.num_waypoints < 2) fail("waypoint head needs K >= 2");
  } else {
    if (spec.head.num_classes < 2) fail("segmentation head needs >= 2 classes");
    const int oh = spec.head.out_height ? spec.head.out_height : spec.in_height;
    const int ow = spec.head.out_width ? spec.head.out_width : spec.in_width;
    if (oh % 16 || ow % 16 || oh <= 0 || ow <= 0) fail("segmentation output must be positive multiples of 16");
  }
}

// ---------------------------------------------------------------------------

Observation Observation::from_sample(const Sample& s, Modality m) {
  switch (m) {
    case Modality::image: return of(s.image);
    case Modality::seg_camera: return camera_seg(s.seg_cam);
    case Modality::seg_map: return map_seg(s.seg_map);
    case Modality::depth: return of(s.depth);
  }
  throw Error("bad modality");
}

int Observation::height() const {
  return image_ ? image_->height : seg_ ? seg_->height : depth_->height;
}
int Observation::width() const { return image_ ? image_->width : seg_ ? seg_->width : depth_->width; }

void Observation::encode(std::span<double> dst) const {
  const auto pixels = static_cast<std::size_t>(height()) * width();
  const auto channels = static_cast<std::size_t>(modality_channels(modality_));
  if (dst.size() != pixels * channels) throw ShapeError("observation encode: destination size mismatch");
  switch (modality_) {
    case Modality::image:
      for (std::size_t i = 0; i < pixels * 3; ++i) dst[i] = (image_->rgb[i] / 255.0 - 0.5) * 2.0;
      break;
    case Modality::seg_camera:
    case Modality::seg_map:
      std::fill(dst.begin(), dst.end(), 0.0);
      for (std::size_t i = 0; i < pixels; ++i) {
        const uint8_t id = seg_->ids[i];
        if (id >= channels) throw Error("observation encode: class id " + std::to_string(id) + " out of range");
        dst[i * channels + id] = 1.0;
      }
      break;
    case Modality::depth:
      for (std::size_t i = 0; i < pixels; ++i) {
        const double d = depth_->meters[i];
        dst[2 * i] = d / kMaxDepth;
        dst[2 * i + 1] = d > 0.0 ? 1.0 : 0.0;
      }
      break;
  }
}

// ---------------------------------------------------------------------------

namespace {

Tensor init_uniform(Shape shape, double bound, Rng& rng) {
  auto t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  uint64_t layer = 0;
  auto add_conv = [&](std::string name, int k, int cin, int cout, double gain) {
    Rng rng(derive_seed(spec_.seed, layer++));
    const double fan_in = static_cast<double>(k * k * cin);
    params_.emplace_back(name + ".w", init_uniform({k, k, cin, cout}, std::sqrt(gain / fan_in), rng));
    params_.emplace_back(name + ".b", Tensor::zeros({cout}, true));
  };
  auto add_dense = [&](std::string name, int64_t in, int64_t out, double gain) {
    Rng rng(derive_seed(spec_.seed, layer++));
    params_.emplace_back(name + ".w", init_uniform({in, out}, std::sqrt(gain / static_cast<double>(in)), rng));
    params_.emplace_back(name + ".b", Tensor::zeros({out}, true));
  };

  const auto& w = spec_.widths;
  int cin = spec_.in_channels;
  for (int i = 0; i < 4; ++i) {
    add_conv("enc" + std::to_string(i + 1), 3, cin, w[i], 6.0);
    cin = w[i];
  }
  const int64_t feat = static_cast<int64_t>(spec_.in_height / 16) * (spec_.in_width / 16) * w[3];
  if (spec_.head.kind == HeadKind::waypoints) {
    add_dense("fc1", feat, spec_.hidden, 6.0);
    add_dense("fc2", spec_.hidden, 2 * spec_.head.num_waypoints, 1.0);
    return;
  }
  const int oh = spec_.head.out_height ? spec_.head.out_height : spec_.in_height;
  const int ow = spec_.head.out_width ? spec_.head.out_width : spec_.in_width;
  const bool cross_view = oh != spec_.in_height || ow != spec_.in_width;
  if (cross_view) add_dense("view", feat, static_cast<int64_t>(oh / 16) * (ow / 16) * w[3], 6.0);
  add_conv("dec3", 3, w[3], w[2], 6.0);
  add_conv("dec2", 3, w[2], w[1], 6.0);
  add_conv("dec1", 3, w[1], w[0], 6.0);
  add_conv("out", 1, cross_view ? w[0] : w[0] + spec_.in_channels, spec_.head.num_classes, 1.0);
}

const Tensor& Model::param(std::string_view name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw Error("model has no parameter '" + std::string(name) + "'");
}

Tensor Model::conv(const Tensor& x, std::string_view prefix, int stride) const {
  const std::string p(prefix);
  const Tensor& w = param(p + ".w");
  const int pad = static_cast<int>(w.dim(0) / 2);
  return conv2d(x, w, param(p + ".b"), {stride, pad});
}

Tensor Model::forward(const Tensor& input) const {
  if (input.ndim() != 4 || input.dim(1) != spec_.in_height || input.dim(2) != spec_.in_width ||
      input.dim(3) != spec_.in_channels) {
    throw ShapeError("model forward: input " + shape_str(input.shape()) + " does not match spec [N," +
                     std::to_string(spec_.in_height) + "," + std::to_string(spec_.in_width) + "," +
                     std::to_string(spec_.in_channels) + "]");
  }
  const int64_t n = input.dim(0);
  const Tensor e1 = relu(conv(input, "enc1", 2));
  const Tensor e2 = relu(conv(e1, "enc2", 2));
  const Tensor e3 = relu(conv(e2, "enc3", 2));
  const Tensor e4 = relu(conv(e3, "enc4", 2));
  const int64_t feat = e4.numel() / n;

  if (spec_.head.kind == HeadKind::waypoints) {
    Tensor h = reshape(e4, {n, feat});
    h = relu(add_bias(matmul(h, param("fc1.w")), param("fc1.b")));
    h = tanh(add_bias(matmul(h, param("fc2.w")), param("fc2.b")));
    return reshape(h, {n, spec_.head.num_waypoints, 2});
  }

  const int oh = spec_.head.out_height ? spec_.head.out_height : spec_.in_height;
  const int ow = spec_.head.out_width ? spec_.head.out_width : spec_.in_width;
  const bool cross_view = oh != spec_.in_height || ow != spec_.in_width;
  if (cross_view) {
    Tensor z = reshape(e4, {n, feat});
    z = relu(add_bias(matmul(z, param("view.w")), param("view.b")));
    z = reshape(z, {n, oh / 16, ow / 16, spec_.widths[3]});
    Tensor u = relu(conv(upsample2x(z), "dec3", 1));
    u = relu(conv(upsample2x(u), "dec2", 1));
    u = relu(conv(upsample2x(u), "dec1", 1));
    return conv(upsample2x(u), "out", 1);
  }
  Tensor u = add(relu(conv(upsample2x(e4), "dec3", 1)), e3);
  u = add(relu(conv(upsample2x(u), "dec2", 1)), e2);
  u = add(relu(conv(upsample2x(u), "dec1", 1)), e1);
  return conv(concat_channels(upsample2x(u), input), "out", 1);
}

Tensor Model::encode(std::span<const Observation> batch) const {
  const auto per = static_cast<std::size_t>(spec_.in_height) * spec_.in_width * spec_.in_channels;
  std::vector<double> data(per * batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Observation& o = batch[i];
    if (o.modality() != spec_.input) {
      throw ModalityError("model expects " + std::string(to_string(spec_.input)) + " input, got " +
                          std::string(to_string(o.modality())));
    }
    if (o.height() != spec_.in_height || o.width() != spec_.in_width) {
      throw ShapeError("observation " + std::to_string(o.height()) + "x" + std::to_string(o.width()) +
                       " does not match model input");
    }
    o.encode(std::span<double>(data.data() + i * per, per));
  }
  return Tensor::from({static_cast<int64_t>(batch.size()), spec_.in_height, spec_.in_width, spec_.in_channels},
                      std::move(data));
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

Model Model::clone() const {
  Model m;
  m.spec_ = spec_;
  for (const auto& [n, t] : params_) {
    m.params_.emplace_back(n, Tensor::from(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true));
  }
  return m;
}

uint64_t Model::checksum() const {
  Fnv1a h;
  for (const auto& [n, t] : params_) h.update(t.data().data(), t.data().size_bytes());
  return h.digest();
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.numel());
  return n;
}

Model build_model(const ModelSpec& spec) { return Model(spec); }

// ---------------------------------------------------------------------------

// Prediction runs in fixed chunks: activations and im2col buffers of a whole
// dataset in one batch would not fit in memory.
constexpr std::size_t kPredictBatch = 64;

std::vector<Waypoints> predict_waypoints(const Model& model, std::span<const Observation> obs) {
  if (model.spec().head.kind != HeadKind::waypoints) throw Error("predict_waypoints: model has no waypoint head");
  NoGradGuard no_grad;
  const int k = model.spec().head.num_waypoints;
  std::vector<Waypoints> result(obs.size());
  for (std::size_t start = 0; start < obs.size(); start += kPredictBatch) {
    const auto chunk = obs.subspan(start, std::min(kPredictBatch, obs.size() - start));
    const Tensor out = model.forward(model.encode(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      auto& points = result[start + i].points;
      points.resize(static_cast<std::size_t>(k));
      for (int j = 0; j < k; ++j) {
        const auto base = static_cast<int64_t>((i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)) * 2);
        points[static_cast<std::size_t>(j)] = {out[base], out[base + 1]};
      }
    }
  }
  return result;
}

Waypoints predict_waypoints(const Model& model, const Observation& obs) {
  return predict_waypoints(model, std::span<const Observation>(&obs, 1)).front();
}

std::vector<SegMap> argmax_segmentation(const Tensor& logits) {
  if (logits.ndim() != 4) throw ShapeError("argmax_segmentation: expects [N,H,W,C], got " + shape_str(logits.shape()));
  const int64_t n = logits.dim(0), h = logits.dim(1), w = logits.dim(2), c = logits.dim(3);
  std::vector<SegMap> out;
  out.reserve(static_cast<std::size_t>(n));
  auto d = logits.data();
  for (int64_t b = 0; b < n; ++b) {
    SegMap s(static_cast<int>(h), static_cast<int>(w));
    for (int64_t p = 0; p < h * w; ++p) {
      const double* l = d.data() + (b * h * w + p) * c;
      s.ids[static_cast<std::size_t>(p)] = static_cast<uint8_t>(std::max_element(l, l + c) - l);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SegMap> predict_segmentation(const Model& model, std::span<const Observation> obs) {
  if (model.spec().head.kind != HeadKind::segmentation) {
    throw Error("predict_segmentation: model has no segmentation head");
  }
  NoGradGuard no_grad;
  std::vector<SegMap> result;
  result.reserve(obs.size());
  for (std::size_t start = 0; start < obs.size(); start += kPredictBatch) {
    const auto chunk = obs.subspan(start, std::min(kPredictBatch, obs.size() - start));
    for (SegMap& s : argmax_segmentation(model.forward(model.encode(chunk)))) result.push_back(std::move(s));
  }
  return result;
}

SegMap predict_segmentation(const Model& model, const Observation& obs) {
  return predict_segmentation(model, std::span<const Observation>(&obs, 1)).front();
}

Waypoints normalize_waypoints(const Waypoints& metres) {
  Waypoints w = metres;
  for (auto& p : w.points) p = p * (1.0 / kWaypointHorizon);
  return w;
}

Waypoints denormalize_waypoints(const Waypoints& normalized) {
  Waypoints w = normalized;
  for (auto& p : w.points) p = p * kWaypointHorizon;
  return w;
}

}  // namespace tdl
