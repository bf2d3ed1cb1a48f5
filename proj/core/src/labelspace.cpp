#include "tdl/labelspace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tdl {

ClassMap ClassMap::identity(int n) {
  ClassMap m;
  m.target_classes = n;
  m.table.resize(static_cast<std::size_t>(n));
  std::iota(m.table.begin(), m.table.end(), uint8_t{0});
  return m;
}

uint8_t ClassMap::operator()(uint8_t id) const {
  if (id >= table.size()) {
    throw Error("class map does not cover class id " + std::to_string(id) + " (covers 0.." +
                std::to_string(static_cast<int>(table.size()) - 1) + ")");
  }
  return table[id];
}

void validate(const ClassMap& map) {
  if (map.target_classes <= 0 || map.target_classes > 256) throw Error("class map target class count out of range");
  for (std::size_t i = 0; i < map.table.size(); ++i) {
    if (map.table[i] >= map.target_classes) {
      throw Error("class map sends " + std::to_string(i) + " to " + std::to_string(map.table[i]) +
                  ", outside the target set of " + std::to_string(map.target_classes));
    }
  }
}

ClassMap compose(const ClassMap& first, const ClassMap& second) {
  ClassMap out;
  out.target_classes = second.target_classes;
  out.table.reserve(first.table.size());
  for (uint8_t id : first.table) out.table.push_back(second(id));
  return out;
}

ClassMap parse_class_map(std::string_view text, int n) {
  ClassMap m = ClassMap::identity(n);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    pos = end + 1;
    if (item.empty()) continue;
    const auto colon = item.find(':');
    int src = -1, dst = -1;
    const bool ok = colon != std::string_view::npos &&
                    std::from_chars(item.data(), item.data() + colon, src).ec == std::errc{} &&
                    std::from_chars(item.data() + colon + 1, item.data() + item.size(), dst).ec == std::errc{};
    if (!ok || src < 0 || src >= n || dst < 0 || dst >= n) {
      throw Error("bad class map entry '" + std::string(item) + "'; expected src:dst with ids below " + std::to_string(n));
    }
    m.table[static_cast<std::size_t>(src)] = static_cast<uint8_t>(dst);
  }
  return m;
}

std::string format_class_map(const ClassMap& map) {
  std::ostringstream os;
  for (std::size_t i = 0; i < map.table.size(); ++i) {
    if (i) os << ',';
    os << i << ':' << static_cast<int>(map.table[i]);
  }
  return os.str();
}

ClassMap maze_to_road_map() {
  ClassMap m = ClassMap::identity();
  m.table[static_cast<std::size_t>(SemClass::distractor)] = static_cast<uint8_t>(SemClass::obstacle);
  return m;
}

ClassMap track_to_road_map() { return ClassMap::identity(); }

SegMap remap(const SegMap& seg, const ClassMap& map) {
  SegMap out = seg;
  for (auto& id : out.ids) id = map(id);
  return out;
}

void remap_dataset(Dataset& data, const ClassMap& map) {
  for (auto& s : data) {
    for (auto& id : s.seg_cam.ids) id = map(id);
    for (auto& id : s.seg_map.ids) id = map(id);
  }
}

double coverage(const HoleMask& mask) {
  if (mask.bits.empty()) return 0.0;
  return static_cast<double>(std::count(mask.bits.begin(), mask.bits.end(), 1)) / static_cast<double>(mask.bits.size());
}

std::vector<HoleMask> synthetic_hole_masks(int count, int height, int width, uint64_t seed) {
  if (count < 0 || height <= 0 || width <= 0) throw Error("synthetic_hole_masks: bad size");
  std::vector<HoleMask> pool;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
    HoleMask m{height, width, std::vector<uint8_t>(static_cast<std::size_t>(height) * width, 0)};
    const auto total = static_cast<double>(m.bits.size());
    const double target = rng.uniform(0.05, 0.20);
    const int blobs = 1 + static_cast<int>(rng.below(4));
    std::size_t painted = 0;
    for (int b = 0; b < blobs; ++b) {
      const double blob_target = target * (b + 1) / blobs;
      int r = static_cast<int>(rng.below(static_cast<uint64_t>(height)));
      int c = static_cast<int>(rng.below(static_cast<uint64_t>(width)));
      const int radius = 1 + static_cast<int>(rng.below(2));
      for (int steps = 0; steps < 100000 && static_cast<double>(painted) / total < blob_target; ++steps) {
        for (int dr = -radius; dr <= radius; ++dr) {
          for (int dc = -radius; dc <= radius; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || cc < 0 || rr >= height || cc >= width || dr * dr + dc * dc > radius * radius) continue;
            auto& bit = m.bits[static_cast<std::size_t>(rr) * width + cc];
            painted += bit == 0;
            bit = 1;
          }
        }
        r = std::clamp(r + static_cast<int>(rng.below(3)) - 1, 0, height - 1);
        c = std::clamp(c + static_cast<int>(rng.below(3)) - 1, 0, width - 1);
      }
    }
    pool.push_back(std::move(m));
  }
  return pool;
}

DepthMap corrupt_depth(const DepthMap& depth, const NoiseSpec& spec, uint64_t seed) {
  if (!(spec.mult_noise_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  if (!(spec.hole_rate >= 0.0 && spec.hole_rate <= 1.0)) throw Error("hole rate must be within [0,1]");
  if (spec.hole_rate > 0.0 && spec.hole_mask_pool.empty()) throw Error("hole rate > 0 with an empty mask pool");
  Rng rng(seed);
  DepthMap out = depth;
  if (spec.hole_rate > 0.0 && rng.uniform() < spec.hole_rate) {
    const auto& mask = spec.hole_mask_pool[rng.below(spec.hole_mask_pool.size())];
    if (mask.height != depth.height || mask.width != depth.width) {
      throw Error("hole mask " + std::to_string(mask.height) + "x" + std::to_string(mask.width) +
                  " does not match depth " + std::to_string(depth.height) + "x" + std::to_string(depth.width));
    }
    for (std::size_t i = 0; i < out.meters.size(); ++i) {
      if (mask.bits[i]) out.meters[i] = 0.0f;
    }
  }
  if (spec.mult_noise_sigma > 0.0) {
    for (auto& d : out.meters) {
      const double n = std::exp(spec.mult_noise_sigma * rng.normal());
      if (d > 0.0f) d = static_cast<float>(d * n);
    }
  }
  return out;
}

void corrupt_dataset_depth(Dataset& data, const NoiseSpec& spec, uint64_t seed) {
  for (std::size_t i = 0; i < data.size(); ++i) data[i].depth = corrupt_depth(data[i].depth, spec, derive_seed(seed, i));
}

std::vector<double> class_histogram(const Dataset& data, Modality modality, int num_classes) {
  if (!is_categorical(modality)) throw ModalityError("class histogram needs a categorical modality, got " + std::string(to_string(modality)));
  if (data.empty()) throw Error("class histogram of an empty dataset");
  std::vector<double> h(static_cast<std::size_t>(num_classes), 0.0);
  double total = 0.0;
  for (const auto& s : data) {
    const SegMap& seg = modality == Modality::seg_camera ? s.seg_cam : s.seg_map;
    if (seg.ids.empty()) throw ModalityError("dataset lacks modality " + std::string(to_string(modality)));
    for (uint8_t id : seg.ids) {
      if (id >= num_classes) throw Error("class id " + std::to_string(id) + " outside the class set");
      h[id] += 1.0;
    }
    total += static_cast<double>(seg.ids.size());
  }
  for (auto& v : h) v /= total;
  return h;
}

double histogram_intersection(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("histogram sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::min(a[i], b[i]);
  return std::clamp(s, 0.0, 1.0);
}

double estimate_label_overlap(const Dataset& a, const Dataset& b, Modality modality) {
  return histogram_intersection(class_histogram(a, modality), class_histogram(b, modality));
}

}  // namespace tdl
