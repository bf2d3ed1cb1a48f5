#pragma once

// Label-space alignment: class remapping and proxy-label augmentation.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/types.hpp"

namespace tdl {

/// Total map from source class ids to target class ids.
struct ClassMap {
  std::vector<uint8_t> table;  // index = source id
  int target_classes = kNumClasses;

  static ClassMap identity(int n = kNumClasses);
  uint8_t operator()(uint8_t id) const;
  friend bool operator==(const ClassMap&, const ClassMap&) = default;
};

/// Throws when a table entry falls outside the target class set.
void validate(const ClassMap& map);
/// Applies `first`, then `second`.
ClassMap compose(const ClassMap& first, const ClassMap& second);
/// "src:dst" pairs separated by commas; unlisted ids below n map to themselves.
ClassMap parse_class_map(std::string_view text, int n = kNumClasses);
std::string format_class_map(const ClassMap& map);

/// Mazeworld hazards (pickup sprites, id 5) become road-world obstacles.
ClassMap maze_to_road_map();
ClassMap track_to_road_map();

/// Throws Error on an id the table does not cover.
SegMap remap(const SegMap& seg, const ClassMap& map);
/// Remaps seg_cam and seg_map of every sample in place.
void remap_dataset(Dataset& data, const ClassMap& map);

struct HoleMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> bits;  // 1 = invalidate
  friend bool operator==(const HoleMask&, const HoleMask&) = default;
};

struct NoiseSpec {
  std::vector<HoleMask> hole_mask_pool;
  double hole_rate = 0.0;
  double mult_noise_sigma = 0.0;
};

/// Each mask is the union of 1-4 random-walk blobs covering 5-20% of pixels.
std::vector<HoleMask> synthetic_hole_masks(int count, int height, int width, uint64_t seed);
double coverage(const HoleMask& mask);

/// Holes are written as the 0 sentinel; surviving pixels get lognormal(0, sigma)
/// multiplicative noise.
DepthMap corrupt_depth(const DepthMap& depth, const NoiseSpec& spec, uint64_t seed);
void corrupt_dataset_depth(Dataset& data, const NoiseSpec& spec, uint64_t seed);

/// Per-class pixel frequencies pooled over a dataset.
std::vector<double> class_histogram(const Dataset& data, Modality modality, int num_classes = kNumClasses);
/// Sum of elementwise minima of two normalized histograms.
double histogram_intersection(std::span<const double> a, std::span<const double> b);
/// Label-domain overlap estimate in [0,1].
double estimate_label_overlap(const Dataset& a, const Dataset& b, Modality modality);

}  // namespace tdl
