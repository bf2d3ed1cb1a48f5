#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "tdl/tensor.hpp"
#include "tdl/types.hpp"

namespace tdl {

enum class HeadKind : uint8_t { waypoints, segmentation };

struct HeadSpec {
  HeadKind kind = HeadKind::waypoints;
  int num_waypoints = kNumWaypoints;  // waypoints head
  int num_classes = kNumClasses;      // segmentation head
  int out_height = 0;                 // segmentation head; 0 = same as input
  int out_width = 0;

  friend bool operator==(const HeadSpec&, const HeadSpec&) = default;
};

/// Architecture and initialization of a small network.
///
/// Backbone: four 3x3 stride-2 conv blocks. Waypoint heads add a two-layer
/// MLP with a tanh output. Segmentation heads add a mirrored upsampling
/// decoder with additive skips; when the output raster differs from the input
/// (image -> map-view), a dense view-transform replaces the skips.
struct ModelSpec {
  Modality input = Modality::image;
  int in_height = kImageHeight;
  int in_width = kImageWidth;
  int in_channels = 3;
  HeadSpec head;
  std::array<int, 4> widths{16, 32, 64, 64};
  int hidden = 64;
  uint64_t seed = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Convenience constructors filling resolution/channels from the modality.
ModelSpec waypoint_spec(Modality input, uint64_t seed, std::array<int, 4> widths = {16, 32, 64, 64});
ModelSpec segmentation_spec(Modality input, Modality output_raster, uint64_t seed,
                            std::array<int, 4> widths = {16, 32, 64, 64});

/// Throws ShapeError for unsupported specs.
void validate(const ModelSpec& spec);

/// Non-owning view of one observation of a declared modality.
class Observation {
 public:
  static Observation of(const Image& img) { return Observation(Modality::image, &img, nullptr, nullptr); }
  static Observation camera_seg(const SegMap& s) { return Observation(Modality::seg_camera, nullptr, &s, nullptr); }
  static Observation map_seg(const SegMap& s) { return Observation(Modality::seg_map, nullptr, &s, nullptr); }
  static Observation of(const DepthMap& d) { return Observation(Modality::depth, nullptr, nullptr, &d); }
  static Observation from_sample(const Sample& s, Modality m);

  Modality modality() const { return modality_; }
  /// Writes the encoded H*W*C float64 input into `dst`.
  void encode(std::span<double> dst) const;
  int height() const;
  int width() const;

 private:
  Observation(Modality m, const Image* i, const SegMap* s, const DepthMap* d)
      : modality_(m), image_(i), seg_(s), depth_(d) {}
  Modality modality_;
  const Image* image_;
  const SegMap* seg_;
  const DepthMap* depth_;
};

class Model {
 public:
  Model() = default;
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  /// Batched forward over an encoded NHWC input. Waypoint heads return
  /// [N,K,2] in [-1,1]; segmentation heads return logits [N,Ho,Wo,C].
  Tensor forward(const Tensor& input) const;

  /// Encodes observations into one batch; rejects a modality other than
  /// the spec's input.
  Tensor encode(std::span<const Observation> batch) const;

  std::vector<std::pair<std::string, Tensor>>& named_parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  const Tensor& param(std::string_view name) const;

  /// Deep copy with independent parameter storage.
  Model clone() const;
  /// FNV-1a over all parameter values, in declaration order.
  uint64_t checksum() const;
  std::size_t parameter_count() const;

 private:
  Tensor conv(const Tensor& x, std::string_view prefix, int stride) const;
  ModelSpec spec_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

Model build_model(const ModelSpec& spec);

/// Normalized waypoints (tanh-bounded). Multiply by kWaypointHorizon for metres.
Waypoints predict_waypoints(const Model& model, const Observation& obs);
/// Batched variant.
std::vector<Waypoints> predict_waypoints(const Model& model, std::span<const Observation> obs);

SegMap predict_segmentation(const Model& model, const Observation& obs);
std::vector<SegMap> predict_segmentation(const Model& model, std::span<const Observation> obs);
/// Per-pixel argmax of logits [N,H,W,C]; ties resolve to the lowest id.
std::vector<SegMap> argmax_segmentation(const Tensor& logits);

Waypoints normalize_waypoints(const Waypoints& metres);
Waypoints denormalize_waypoints(const Waypoints& normalized);

}  // namespace tdl
