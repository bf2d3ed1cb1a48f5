#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/common.hpp"

namespace tdl {

/// Shared semantic class set.
enum class SemClass : uint8_t {
  void_sky = 0,
  road = 1,      // road, floor, track
  offroad = 2,   // offroad, wall
  obstacle = 3,  // hazard, car
  marking = 4,
  distractor = 5,
};
inline constexpr int kNumClasses = 6;

inline constexpr int kImageHeight = 48;
inline constexpr int kImageWidth = 64;
inline constexpr int kMapSize = 64;            // cells per side of the map-view window
inline constexpr double kMapCell = 0.25;       // metres per map cell
inline constexpr double kMaxDepth = 50.0;      // metres
inline constexpr int kNumWaypoints = 5;
inline constexpr double kWaypointSpacing = 1.0;  // metres of arc length
inline constexpr double kWaypointHorizon = 5.0;  // normalization length

enum class Modality : uint8_t { image, seg_camera, seg_map, depth };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);
/// Input channels after encoding (one-hot for categorical, depth + validity).
int modality_channels(Modality m);
int modality_height(Modality m);
int modality_width(Modality m);
bool is_categorical(Modality m);

/// 8-bit RGB raster, row-major HWC.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0) {}
  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel class ids.
struct SegMap {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> ids;

  SegMap() = default;
  SegMap(int h, int w, uint8_t fill = 0) : height(h), width(w), ids(static_cast<std::size_t>(h) * w, fill) {}
  uint8_t at(int r, int c) const { return ids[static_cast<std::size_t>(r) * width + c]; }
  friend bool operator==(const SegMap&, const SegMap&) = default;
};

/// Metric depth in metres; 0 marks an invalid (hole) pixel.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> meters;

  DepthMap() = default;
  DepthMap(int h, int w, float fill = 0.0f) : height(h), width(w), meters(static_cast<std::size_t>(h) * w, fill) {}
  float at(int r, int c) const { return meters[static_cast<std::size_t>(r) * width + c]; }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Ego-frame trajectory plan: x to the right, y forward, metres.
struct Waypoints {
  std::vector<Vec2> points;
  friend bool operator==(const Waypoints&, const Waypoints&) = default;
};

struct AgentState {
  Vec2 position;
  double heading = 0.0;  // radians, world frame, counter-clockwise from +x
  double speed = 0.0;    // m/s
  double odometer = 0.0;
  double time = 0.0;     // simulation clock; moving obstacles are a function of it
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// All modalities rendered from one instantaneous state.
struct Sample {
  Image image;
  SegMap seg_cam;
  SegMap seg_map;
  DepthMap depth;
  Waypoints expert;
  AgentState pose;
  friend bool operator==(const Sample&, const Sample&) = default;
};

using Dataset = std::vector<Sample>;

}  // namespace tdl
