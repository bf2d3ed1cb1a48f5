#pragma once

// Procedural toy domains. Three kinds share one semantic class set but differ
// in geometry and visual style:
//   trackworld - smooth closed racing loop (perturbed-radius curve)
//   mazeworld  - axis-aligned corridor graph with a loop route and hazards
//   roadworld  - filleted polygon loop with lane marking and moving cars
//
// Every function here is a pure function of (world, state).

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tdl/types.hpp"

namespace tdl {

enum class WorldKind : uint8_t { trackworld, mazeworld, roadworld };
std::string_view to_string(WorldKind k);
WorldKind parse_world_kind(std::string_view s);

struct StyleSpec {
  std::array<std::array<double, 3>, kNumClasses> palette{};
  double texture_noise = 0.1;
  double lighting_gain = 1.0;
  double sprite_rate = 0.0;  // image-only decals per ground cell

  friend bool operator==(const StyleSpec&, const StyleSpec&) = default;
};

/// Default looks, one per world kind.
StyleSpec default_style(WorldKind kind);
/// Colours must lie in [0,1], noise and sprite rate in [0,1], gain > 0.
void validate(const StyleSpec& style);
/// Source and target styles must differ in palette and texture noise.
bool styles_distinct(const StyleSpec& a, const StyleSpec& b);

struct WorldSpec {
  WorldKind kind = WorldKind::trackworld;
  uint64_t seed = 0;
  double length = 500.0;            // target centerline length, metres
  double width = 4.0;               // road/track width; maze corridors are 2x
  double obstacle_density = 0.0;    // hazards or cars per 100 m
  double distractor_density = 4.0;  // off-road props per 100 m
  StyleSpec style;

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

void validate(const WorldSpec& spec);

/// Closed centerline resampled at uniform arc-length spacing.
class Path {
 public:
  Path() = default;
  Path(std::vector<Vec2> polyline, double spacing);

  double length() const { return length_; }
  double spacing() const { return spacing_; }
  const std::vector<Vec2>& points() const { return pts_; }
  bool empty() const { return pts_.empty(); }

  double wrap(double s) const;
  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
  /// Left-pointing unit normal.
  Vec2 normal_at(double s) const;
  /// Arc length of the nearest centerline point; optionally the signed
  /// lateral offset (positive to the left of travel).
  double project(Vec2 p, double* lateral = nullptr) const;
  /// Unsigned curvature estimate at arc length s.
  double curvature_at(double s) const;
  /// Smallest distance between two samples more than `min_arc` apart along
  /// the loop; small values mean the loop nearly touches itself.
  double min_separation(double min_arc) const;

 private:
  std::vector<Vec2> pts_;
  std::vector<int> grid_;  // bucket heads into next_
  std::vector<int> next_;
  Vec2 grid_origin_;
  double grid_cell_ = 4.0;
  int grid_nx_ = 0;
  int grid_ny_ = 0;
  double spacing_ = 0.25;
  double length_ = 0.0;
};

struct Prop {
  enum class Shape : uint8_t { cylinder, box };
  Shape shape = Shape::cylinder;
  uint8_t cls = static_cast<uint8_t>(SemClass::distractor);
  Vec2 center;            // static props
  double radius = 0.5;    // cylinder
  Vec2 half_extent;       // box: along-heading, across
  double yaw = 0.0;
  double height = 2.0;
  bool avoid = false;     // the expert steers around it
  bool moving = false;    // advances along the path
  double path_s = 0.0;    // moving: arc length at t = 0
  double lateral = 0.0;   // moving: lateral offset
  double speed = 0.0;     // moving: m/s along the path
};

/// Pose of a prop at time t.
struct PlacedProp {
  const Prop* prop;
  Vec2 center;
  double yaw;
};

bool footprint_contains(const PlacedProp& placed, Vec2 p);

inline constexpr double kWallHeight = 4.0;

struct Events {
  bool offroad = false;
  bool collision = false;
  bool any() const { return offroad || collision; }
};

class World {
 public:
  WorldKind kind() const { return spec_.kind; }
  const WorldSpec& spec() const { return spec_; }
  const Path& path() const { return path_; }
  const std::vector<Prop>& props() const { return props_; }
  double half_width() const { return half_width_; }

  /// Class of the ground surface at a world point (no props).
  uint8_t ground_class(Vec2 p) const;
  /// Ground or prop class seen from above at time t.
  uint8_t top_down_class(Vec2 p, double t) const;
  bool navigable(Vec2 p) const;
  /// True when p lies in a maze wall cell.
  bool in_wall(Vec2 p) const;
  std::vector<PlacedProp> props_at(double t) const;
  /// Prop footprint containing p at time t, if any.
  const Prop* prop_hit(Vec2 p, double t) const;

  // Maze grid; empty for other kinds.
  int maze_cols() const { return maze_cols_; }
  int maze_rows() const { return maze_rows_; }
  double maze_cell() const { return maze_cell_; }
  bool maze_floor(int col, int row) const;

  /// Same geometry with a different style; labels are unaffected.
  World restyled(const StyleSpec& style) const;
  World with_prop(const Prop& prop) const;

  /// Building blocks used by generate_world and by tests.
  static World from_path(WorldSpec spec, Path path);
  static World from_maze(WorldSpec spec, std::vector<std::string> layout, double cell, std::vector<Vec2> route);

 private:
  friend World generate_world(const WorldSpec& spec);
  void rasterize_road();

  WorldSpec spec_;
  Path path_;
  std::vector<Prop> props_;
  double half_width_ = 2.0;

  // track/road ground raster
  Vec2 raster_origin_;
  double raster_res_ = 0.1;
  int raster_nx_ = 0;
  int raster_ny_ = 0;
  std::vector<uint8_t> raster_;

  // maze grid (row-major, row 0 at min y)
  int maze_cols_ = 0;
  int maze_rows_ = 0;
  double maze_cell_ = 8.0;
  std::vector<uint8_t> maze_;
};

/// Deterministic in spec.seed. Degenerate geometry is regenerated with an
/// incremented sub-seed up to 10 times before throwing.
World generate_world(const WorldSpec& spec);

/// A stadium-shaped road loop with long straights; used for control tests.
World straight_test_world(double straight_length = 300.0, StyleSpec style = default_style(WorldKind::roadworld));

// ---------------------------------------------------------------------------
// Rendering

struct Camera {
  double height = 1.5;
  double pitch = 15.0 * kPi / 180.0;  // downward
  double hfov = 90.0 * kPi / 180.0;
};

enum RenderMask : uint32_t {
  render_image = 1u << 0,
  render_seg_cam = 1u << 1,
  render_seg_map = 1u << 2,
  render_depth = 1u << 3,
  render_expert = 1u << 4,
  render_all = 0x1f,
};

struct RenderOptions {
  uint32_t mask = render_all;
  double lighting = 1.0;  // multiplies style.lighting_gain
  Camera camera;
};

uint32_t render_mask_for(Modality m);

Sample render(const World& world, const AgentState& agent, const RenderOptions& opts = {});

/// Ray direction for pixel (row, col), world frame (x, y, z).
std::array<double, 3> camera_ray(const Camera& cam, double heading, int row, int col);

// ---------------------------------------------------------------------------
// Expert and kinematics

inline constexpr double kExpertClearance = 1.5;
inline constexpr double kMaxYawRate = 1.0;  // rad/s at |steer| = 1
inline constexpr double kMaxSpeed = 5.0;    // m/s at throttle = 1
inline constexpr double kDefaultDt = 0.1;

/// Path-following plan in the ego frame, metres.
Waypoints expert_waypoints(const World& world, const AgentState& agent);
/// Lateral deflection of the expert path at arc length s, time t.
double expert_offset(const World& world, double s, double t);

struct Control {
  double steer = 0.0;     // [-1,1], positive turns left
  double throttle = 0.0;  // [0,1]
};

struct StepResult {
  AgentState state;
  Events events;
};

StepResult step(const World& world, const AgentState& agent, Control control, double dt = kDefaultDt);
Events check_events(const World& world, const AgentState& agent);

/// Ego-frame coordinates of a world point.
Vec2 to_ego(const AgentState& agent, Vec2 world_point);
Vec2 from_ego(const AgentState& agent, Vec2 ego_point);

// ---------------------------------------------------------------------------
// Datasets

enum class Placement : uint8_t { on_expert_path, random_pose };

struct DatasetOptions {
  Placement placement = Placement::on_expert_path;
  double lateral_perturbation = 1.0;
  double heading_perturbation = 0.3;
  double lighting_jitter = 0.2;  // lighting multiplier drawn from 1 +- jitter
  double time_span = 300.0;      // clock range for moving props
  uint32_t mask = render_all;

  friend bool operator==(const DatasetOptions&, const DatasetOptions&) = default;
};

Dataset generate_dataset(const World& world, int n, uint64_t seed, const DatasetOptions& opts = {});

/// Random spawn on the path, clear of props, heading aligned.
AgentState spawn_pose(const World& world, uint64_t seed);

}  // namespace tdl
