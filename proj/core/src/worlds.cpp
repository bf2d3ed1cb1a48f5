#include "tdl/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace tdl {

namespace {

constexpr double kMarkingHalfWidth = 0.15;
constexpr double kDashPeriod = 6.0;
constexpr double kDashOn = 3.0;
constexpr double kRasterRes = 0.1;
constexpr double kRasterMargin = 20.0;
constexpr double kCarSpeed = 2.0;
constexpr double kCarLane = -1.0;
constexpr double kMazeFillet = 6.0;
constexpr double kRoadFillet = 12.0;
constexpr int kMaxAttempts = 10;

// Avoidance profile: full deflection within the prop's half length plus this
// margin, then a cosine ramp over kRampLength.
constexpr double kFullMargin = 1.0;
constexpr double kRampLength = 6.0;

struct Degenerate {
  const char* why;
};

uint8_t cls(SemClass c) { return static_cast<uint8_t>(c); }

double along_extent(const Prop& p) { return p.shape == Prop::Shape::cylinder ? p.radius : p.half_extent.x; }
double across_extent(const Prop& p) { return p.shape == Prop::Shape::cylinder ? p.radius : p.half_extent.y; }
double bounding_radius(const Prop& p) { return p.shape == Prop::Shape::cylinder ? p.radius : p.half_extent.norm(); }

double cyclic_delta(double a, double b, double length) {
  double d = std::fmod(a - b, length);
  if (d > length / 2.0) d -= length;
  if (d < -length / 2.0) d += length;
  return d;
}

/// Corner-filleted closed polygon as a dense polyline. Empty when a fillet
/// does not fit between its neighbours or a corner is too sharp.
std::vector<Vec2> rounded_polygon(const std::vector<Vec2>& v, double radius) {
  const std::size_t n = v.size();
  std::vector<Vec2> out;
  std::vector<double> tangent_len(n);
  std::vector<double> turn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 din = v[i] - v[(i + n - 1) % n];
    const Vec2 dout = v[(i + 1) % n] - v[i];
    turn[i] = std::atan2(din.cross(dout), din.dot(dout));
    if (std::abs(turn[i]) > 2.1) return {};
    tangent_len[i] = radius * std::tan(std::abs(turn[i]) / 2.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double edge = (v[(i + 1) % n] - v[i]).norm();
    if (tangent_len[i] + tangent_len[(i + 1) % n] > edge * 0.95) return {};
  }
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 din = v[i] - v[(i + n - 1) % n];
    din = (1.0 / din.norm()) * din;
    Vec2 dout = v[(i + 1) % n] - v[i];
    dout = (1.0 / dout.norm()) * dout;
    const Vec2 p1 = v[i] - tangent_len[i] * din;
    if (std::abs(turn[i]) < 1e-9) {
      out.push_back(v[i]);
      continue;
    }
    const double side = turn[i] > 0.0 ? 1.0 : -1.0;
    const Vec2 left{-din.y, din.x};
    const Vec2 center = p1 + (side * radius) * left;
    const Vec2 r0 = p1 - center;
    const int steps = std::max(2, static_cast<int>(std::ceil(std::abs(turn[i]) * radius / 0.1)));
    for (int k = 0; k <= steps; ++k) {
      const double a = turn[i] * k / steps;
      const double c = std::cos(a);
      const double s = std::sin(a);
      out.push_back(center + Vec2{c * r0.x - s * r0.y, s * r0.x + c * r0.y});
    }
  }
  return out;
}

double polyline_length(const std::vector<Vec2>& poly) {
  double len = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) len += (poly[(i + 1) % poly.size()] - poly[i]).norm();
  return len;
}

/// Scales polygon vertices so the filleted loop has the requested length.
std::vector<Vec2> fit_rounded_polygon(std::vector<Vec2> v, double radius, double length) {
  for (int iter = 0; iter < 6; ++iter) {
    auto poly = rounded_polygon(v, radius);
    if (poly.empty()) throw Degenerate{"fillet does not fit"};
    const double f = length / polyline_length(poly);
    if (std::abs(f - 1.0) < 1e-4) return poly;
    for (auto& p : v) p = f * p;
  }
  auto poly = rounded_polygon(v, radius);
  if (poly.empty()) throw Degenerate{"fillet does not fit"};
  return poly;
}

Prop static_prop_on_path(const Path& path, Prop p, double s, double lateral) {
  p.path_s = path.wrap(s);
  p.lateral = lateral;
  p.center = path.point_at(s) + lateral * path.normal_at(s);
  const Vec2 t = path.tangent_at(s);
  p.yaw = std::atan2(t.y, t.x);
  return p;
}

void check_path(const Path& path, double half_width) {
  for (double s = 0.0; s < path.length(); s += 1.0) {
    if (path.curvature_at(s) > 1.0 / 9.0) throw Degenerate{"curvature too high"};
  }
  if (path.min_separation(6.0 * half_width + 10.0) < 2.0 * half_width + 8.0) {
    throw Degenerate{"loop nearly self-intersects"};
  }
}

void place_distractors(World& w, std::vector<Prop>& props, Rng& rng, double density) {
  const Path& path = w.path();
  const int n = static_cast<int>(std::lround(density * path.length() / 100.0));
  const double hw = w.half_width();
  int placed = 0;
  for (int attempt = 0; attempt < 30 * n && placed < n; ++attempt) {
    Prop p;
    p.cls = cls(SemClass::distractor);
    if (w.kind() == WorldKind::roadworld && rng.uniform() < 0.5) {
      p.shape = Prop::Shape::box;
      p.half_extent = {rng.uniform(1.0, 3.0), rng.uniform(1.0, 2.5)};
      p.height = rng.uniform(3.0, 6.0);
    } else if (w.kind() == WorldKind::roadworld) {
      p.radius = 0.2;
      p.height = 4.0;
    } else {
      p.radius = rng.uniform(0.3, 0.8);
      p.height = rng.uniform(2.0, 4.0);
    }
    const double s = rng.uniform(0.0, path.length());
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double off = hw + bounding_radius(p) + rng.uniform(1.5, 7.0);
    p = static_prop_on_path(path, p, s, side * off);
    p.yaw += rng.uniform(-0.3, 0.3);
    double lat = 0.0;
    path.project(p.center, &lat);
    if (std::abs(lat) - bounding_radius(p) < hw + 1.0) continue;
    bool overlaps = false;
    for (const auto& q : props) {
      if ((q.center - p.center).norm() < bounding_radius(p) + bounding_radius(q) + 0.5) overlaps = true;
    }
    if (overlaps) continue;
    props.push_back(p);
    ++placed;
  }
}

/// Static obstacles on the path, spaced along it and kept off curves.
void place_path_obstacles(const Path& path, std::vector<Prop>& props, Rng& rng, int n, const Prop& proto,
                          double max_lateral, double min_spacing, double max_curvature, double window) {
  std::vector<double> taken;
  int placed = 0;
  for (int attempt = 0; attempt < 50 * n && placed < n; ++attempt) {
    const double s = rng.uniform(0.0, path.length());
    bool straight = true;
    for (double k = -window; k <= window && straight; k += 1.0) straight = path.curvature_at(s + k) < max_curvature;
    if (!straight) continue;
    bool crowded = false;
    for (double t : taken) crowded = crowded || std::abs(cyclic_delta(s, t, path.length())) < min_spacing;
    if (crowded) continue;
    Prop p = static_prop_on_path(path, proto, s, rng.uniform(-max_lateral, max_lateral));
    p.avoid = true;
    props.push_back(p);
    taken.push_back(s);
    ++placed;
  }
}

int count_for(double density, double length) { return static_cast<int>(std::lround(density * length / 100.0)); }

World build_track(const WorldSpec& spec, Rng& rng) {
  double amp[3];
  double phase[3];
  for (int k = 0; k < 3; ++k) {
    amp[k] = rng.uniform(0.0, 0.3 / (k + 2));
    phase[k] = rng.uniform(0.0, 2.0 * kPi);
  }
  const int m = 4000;
  std::vector<Vec2> poly(m);
  for (int i = 0; i < m; ++i) {
    const double phi = 2.0 * kPi * i / m;
    double r = 1.0;
    for (int k = 0; k < 3; ++k) r += amp[k] * std::cos((k + 2) * phi + phase[k]);
    poly[static_cast<std::size_t>(i)] = {r * std::cos(phi), r * std::sin(phi)};
  }
  const double scale = spec.length / polyline_length(poly);
  for (auto& p : poly) p = scale * p;
  Path path(std::move(poly), 0.25);
  check_path(path, spec.width / 2.0);

  World w = World::from_path(spec, std::move(path));
  std::vector<Prop> props;
  Prop cone;
  cone.cls = cls(SemClass::obstacle);
  cone.radius = 0.4;
  cone.height = 0.8;
  place_path_obstacles(w.path(), props, rng, count_for(spec.obstacle_density, spec.length), cone,
                       w.half_width() / 2.0, 15.0, 1.0 / 40.0, 10.0);
  place_distractors(w, props, rng, spec.distractor_density);
  for (const auto& p : props) w = w.with_prop(p);
  return w;
}

World build_road(const WorldSpec& spec, Rng& rng) {
  const int corners = 4 + static_cast<int>(rng.below(3));
  std::vector<Vec2> v;
  for (int i = 0; i < corners; ++i) {
    const double a = 2.0 * kPi * (i + rng.uniform(-0.2, 0.2)) / corners;
    const double r = rng.uniform(0.75, 1.25);
    v.push_back({r * std::cos(a), r * std::sin(a)});
  }
  for (auto& p : v) p = (spec.length / 6.0) * p;
  Path path(fit_rounded_polygon(std::move(v), kRoadFillet, spec.length), 0.25);
  check_path(path, spec.width / 2.0);

  World w = World::from_path(spec, std::move(path));
  std::vector<Prop> props;
  const int cars = std::min(count_for(spec.obstacle_density, spec.length),
                            static_cast<int>(spec.length / 15.0));
  const double slot = cars > 0 ? spec.length / cars : 0.0;
  for (int i = 0; i < cars; ++i) {
    Prop car;
    car.shape = Prop::Shape::box;
    car.cls = cls(SemClass::obstacle);
    car.half_extent = {1.8, 0.9};
    car.height = 1.5;
    car.avoid = true;
    car.moving = true;
    car.speed = kCarSpeed;
    car.lateral = kCarLane;
    car.path_s = i * slot + rng.uniform(0.0, slot - 15.0 + 1e-9);
    props.push_back(car);
  }
  place_distractors(w, props, rng, spec.distractor_density);
  for (const auto& p : props) w = w.with_prop(p);
  return w;
}

// Maze: a random hole-free, pinch-free polyomino on a coarse lattice; its
// boundary becomes the loop route, carved into a grid of 8 m wall cells.
struct Polyomino {
  int size;
  std::vector<uint8_t> in;

  bool at(int x, int y) const {
    if (x < 0 || y < 0 || x >= size || y >= size) return false;
    return in[static_cast<std::size_t>(y) * size + x] != 0;
  }
  void set(int x, int y, bool v) { in[static_cast<std::size_t>(y) * size + x] = v ? 1 : 0; }

  int perimeter() const {
    int p = 0;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        if (!at(x, y)) continue;
        p += !at(x - 1, y) + !at(x + 1, y) + !at(x, y - 1) + !at(x, y + 1);
      }
    }
    return p;
  }

  bool valid() const {
    for (int y = -1; y < size; ++y) {
      for (int x = -1; x < size; ++x) {
        const bool a = at(x, y), b = at(x + 1, y), c = at(x, y + 1), d = at(x + 1, y + 1);
        if ((a && d && !b && !c) || (b && c && !a && !d)) return false;
      }
    }
    // Complement must be connected (no holes).
    std::vector<uint8_t> seen(in.size(), 0);
    std::vector<std::pair<int, int>> stack{{0, 0}};
    seen[0] = 1;
    std::size_t reached = 0;
    while (!stack.empty()) {
      auto [x, y] = stack.back();
      stack.pop_back();
      ++reached;
      const int dx[4] = {1, -1, 0, 0};
      const int dy[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= size || ny >= size || at(nx, ny)) continue;
        auto& s = seen[static_cast<std::size_t>(ny) * size + nx];
        if (s) continue;
        s = 1;
        stack.emplace_back(nx, ny);
      }
    }
    const auto outside = static_cast<std::size_t>(std::count(in.begin(), in.end(), 0));
    return reached == outside;
  }
};

World build_maze(const WorldSpec& spec, Rng& rng) {
  const double cell = 2.0 * spec.width;
  const double lattice = 2.0 * cell;
  const int target = std::max(8, 2 * static_cast<int>(std::lround(spec.length / lattice / 2.0)));
  const int g = std::max(8, target / 2 + 4);
  Polyomino poly{g, std::vector<uint8_t>(static_cast<std::size_t>(g) * g, 0)};
  poly.set(g / 2, g / 2, true);
  for (int attempt = 0; attempt < 20000 && poly.perimeter() < target; ++attempt) {
    const int x = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(g - 2)));
    const int y = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(g - 2)));
    if (poly.at(x, y) || !(poly.at(x - 1, y) || poly.at(x + 1, y) || poly.at(x, y - 1) || poly.at(x, y + 1))) continue;
    poly.set(x, y, true);
    if (!poly.valid()) poly.set(x, y, false);
  }
  if (poly.perimeter() < target) throw Degenerate{"maze loop too short"};

  // Counter-clockwise boundary edges keyed by start node.
  std::map<std::pair<int, int>, std::pair<int, int>> next;
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      if (!poly.at(x, y)) continue;
      if (!poly.at(x, y - 1)) next[{x, y}] = {x + 1, y};
      if (!poly.at(x + 1, y)) next[{x + 1, y}] = {x + 1, y + 1};
      if (!poly.at(x, y + 1)) next[{x + 1, y + 1}] = {x, y + 1};
      if (!poly.at(x - 1, y)) next[{x, y + 1}] = {x, y};
    }
  }
  std::vector<std::pair<int, int>> loop;
  auto node = next.begin()->first;
  do {
    loop.push_back(node);
    node = next.at(node);
  } while (node != loop.front() && loop.size() <= next.size());
  if (loop.size() != next.size()) throw Degenerate{"maze boundary not a single loop"};

  const int fine = 2 * g + 3;
  std::vector<std::string> layout(static_cast<std::size_t>(fine), std::string(static_cast<std::size_t>(fine), '#'));
  auto fine_of = [](std::pair<int, int> n) { return std::pair<int, int>{2 * n.first + 1, 2 * n.second + 1}; };
  auto world_of = [&](std::pair<int, int> f) { return Vec2{(f.first + 0.5) * cell, (f.second + 0.5) * cell}; };
  std::vector<std::pair<int, int>> route_cells;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const auto a = fine_of(loop[i]);
    const auto b = fine_of(loop[(i + 1) % loop.size()]);
    for (int k = 0; k <= 2; ++k) {
      const int cx = a.first + (b.first - a.first) * k / 2;
      const int cy = a.second + (b.second - a.second) * k / 2;
      layout[static_cast<std::size_t>(cy)][static_cast<std::size_t>(cx)] = '.';
    }
    route_cells.push_back(a);
  }

  auto is_wall = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= fine || y >= fine) return true;
    return layout[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] == '#';
  };
  const int dead_ends = 2 + static_cast<int>(rng.below(3));
  for (int made = 0, attempt = 0; made < dead_ends && attempt < 200; ++attempt) {
    const auto start = route_cells[rng.below(route_cells.size())];
    const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto& d = dirs[rng.below(4)];
    const int len = 2 + static_cast<int>(rng.below(4));
    bool ok = true;
    for (int k = 1; k <= len && ok; ++k) {
      const int x = start.first + d[0] * k, y = start.second + d[1] * k;
      if (x < 1 || y < 1 || x >= fine - 1 || y >= fine - 1 || !is_wall(x, y)) {
        ok = false;
        break;
      }
      for (const auto& e : dirs) {
        const int nx = x + e[0], ny = y + e[1];
        if (nx == x - d[0] && ny == y - d[1]) continue;
        if (!is_wall(nx, ny)) ok = false;
      }
    }
    if (!ok) continue;
    for (int k = 1; k <= len; ++k) {
      layout[static_cast<std::size_t>(start.second + d[1] * k)][static_cast<std::size_t>(start.first + d[0] * k)] = '.';
    }
    ++made;
  }

  std::vector<Vec2> corners;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const auto p = loop[(i + loop.size() - 1) % loop.size()];
    const auto c = loop[i];
    const auto n = loop[(i + 1) % loop.size()];
    const int cross = (c.first - p.first) * (n.second - c.second) - (c.second - p.second) * (n.first - c.first);
    if (cross != 0) corners.push_back(world_of(fine_of(c)));
  }
  auto route = rounded_polygon(corners, kMazeFillet * spec.width / 4.0);
  if (route.empty()) throw Degenerate{"maze fillet does not fit"};

  World w = World::from_maze(spec, std::move(layout), cell, std::move(route));
  std::vector<Prop> props;
  Prop hazard;
  hazard.cls = cls(SemClass::distractor);
  hazard.radius = 0.5;
  hazard.height = 1.0;
  place_path_obstacles(w.path(), props, rng, count_for(spec.obstacle_density, w.path().length()), hazard,
                       0.375 * w.half_width(), 12.0, 1e-3, 7.0);
  for (const auto& p : props) w = w.with_prop(p);
  return w;
}

}  // namespace

std::string_view to_string(WorldKind k) {
  switch (k) {
    case WorldKind::trackworld: return "trackworld";
    case WorldKind::mazeworld: return "mazeworld";
    case WorldKind::roadworld: return "roadworld";
  }
  return "?";
}

WorldKind parse_world_kind(std::string_view s) {
  if (s == "trackworld") return WorldKind::trackworld;
  if (s == "mazeworld") return WorldKind::mazeworld;
  if (s == "roadworld") return WorldKind::roadworld;
  throw Error("unknown world kind '" + std::string(s) + "'");
}

StyleSpec default_style(WorldKind kind) {
  StyleSpec s;
  switch (kind) {
    case WorldKind::trackworld:
      s.palette = {{{0.55, 0.75, 0.95}, {0.35, 0.35, 0.38}, {0.25, 0.60, 0.20},
                    {0.95, 0.50, 0.10}, {0.95, 0.95, 0.95}, {0.15, 0.35, 0.10}}};
      s.texture_noise = 0.15;
      s.lighting_gain = 1.0;
      s.sprite_rate = 0.05;
      break;
    case WorldKind::mazeworld:
      s.palette = {{{0.10, 0.10, 0.12}, {0.45, 0.30, 0.20}, {0.50, 0.50, 0.55},
                    {0.80, 0.10, 0.10}, {0.90, 0.80, 0.20}, {0.20, 0.80, 0.30}}};
      s.texture_noise = 0.35;
      s.lighting_gain = 0.8;
      s.sprite_rate = 0.1;
      break;
    case WorldKind::roadworld:
      s.palette = {{{0.70, 0.80, 0.90}, {0.25, 0.25, 0.27}, {0.60, 0.58, 0.52},
                    {0.20, 0.30, 0.80}, {0.95, 0.85, 0.30}, {0.60, 0.45, 0.40}}};
      s.texture_noise = 0.05;
      s.lighting_gain = 1.1;
      s.sprite_rate = 0.0;
      break;
  }
  return s;
}

void validate(const StyleSpec& style) {
  for (const auto& rgb : style.palette) {
    for (double c : rgb) {
      if (!(c >= 0.0 && c <= 1.0)) throw Error("style palette colour outside [0,1]");
    }
  }
  if (!(style.texture_noise >= 0.0 && style.texture_noise <= 1.0)) throw Error("style texture_noise outside [0,1]");
  if (!(style.sprite_rate >= 0.0 && style.sprite_rate <= 1.0)) throw Error("style sprite_rate outside [0,1]");
  if (!(style.lighting_gain > 0.0 && std::isfinite(style.lighting_gain))) throw Error("style lighting_gain must be > 0");
}

bool styles_distinct(const StyleSpec& a, const StyleSpec& b) {
  return a.palette != b.palette && a.texture_noise != b.texture_noise;
}

void validate(const WorldSpec& spec) {
  if (!(spec.length >= 100.0 && spec.length <= 5000.0)) throw Error("world length must be within [100, 5000] m");
  if (!(spec.width >= 2.0 && spec.width <= 10.0)) throw Error("world width must be within [2, 10] m");
  if (!(spec.obstacle_density >= 0.0 && std::isfinite(spec.obstacle_density))) {
    throw Error("obstacle density must be >= 0");
  }
  if (!(spec.distractor_density >= 0.0 && std::isfinite(spec.distractor_density))) {
    throw Error("distractor density must be >= 0");
  }
  validate(spec.style);
}

bool footprint_contains(const PlacedProp& placed, Vec2 p) {
  const Prop& prop = *placed.prop;
  const Vec2 d = p - placed.center;
  if (prop.shape == Prop::Shape::cylinder) return d.dot(d) <= prop.radius * prop.radius;
  const double c = std::cos(placed.yaw);
  const double s = std::sin(placed.yaw);
  const double along = d.x * c + d.y * s;
  const double across = -d.x * s + d.y * c;
  return std::abs(along) <= prop.half_extent.x && std::abs(across) <= prop.half_extent.y;
}

uint8_t World::ground_class(Vec2 p) const {
  if (spec_.kind == WorldKind::mazeworld) return in_wall(p) ? cls(SemClass::offroad) : cls(SemClass::road);
  const double gx = (p.x - raster_origin_.x) / raster_res_;
  const double gy = (p.y - raster_origin_.y) / raster_res_;
  if (!(gx >= 0.0 && gy >= 0.0 && gx < raster_nx_ && gy < raster_ny_)) return cls(SemClass::offroad);
  return raster_[static_cast<std::size_t>(gy) * raster_nx_ + static_cast<std::size_t>(gx)];
}

uint8_t World::top_down_class(Vec2 p, double t) const {
  if (const Prop* hit = prop_hit(p, t)) return hit->cls;
  return ground_class(p);
}

bool World::navigable(Vec2 p) const {
  if (spec_.kind == WorldKind::mazeworld) return !in_wall(p);
  const uint8_t c = ground_class(p);
  return c == cls(SemClass::road) || c == cls(SemClass::marking);
}

bool World::maze_floor(int col, int row) const {
  if (col < 0 || row < 0 || col >= maze_cols_ || row >= maze_rows_) return false;
  return maze_[static_cast<std::size_t>(row) * maze_cols_ + col] != 0;
}

bool World::in_wall(Vec2 p) const {
  if (spec_.kind != WorldKind::mazeworld) return false;
  return !maze_floor(static_cast<int>(std::floor(p.x / maze_cell_)), static_cast<int>(std::floor(p.y / maze_cell_)));
}

std::vector<PlacedProp> World::props_at(double t) const {
  std::vector<PlacedProp> out;
  out.reserve(props_.size());
  for (const auto& p : props_) {
    if (!p.moving) {
      out.push_back({&p, p.center, p.yaw});
      continue;
    }
    const double s = p.path_s + p.speed * t;
    const Vec2 tan = path_.tangent_at(s);
    out.push_back({&p, path_.point_at(s) + p.lateral * path_.normal_at(s), std::atan2(tan.y, tan.x)});
  }
  return out;
}

const Prop* World::prop_hit(Vec2 p, double t) const {
  for (const auto& placed : props_at(t)) {
    if (footprint_contains(placed, p)) return placed.prop;
  }
  return nullptr;
}

World World::restyled(const StyleSpec& style) const {
  World w = *this;
  w.spec_.style = style;
  return w;
}

World World::with_prop(const Prop& prop) const {
  World w = *this;
  Prop p = prop;
  if (p.avoid && !p.moving && !path_.empty()) p.path_s = path_.project(p.center, &p.lateral);
  w.props_.push_back(p);
  return w;
}

World World::from_path(WorldSpec spec, Path path) {
  World w;
  w.spec_ = std::move(spec);
  w.path_ = std::move(path);
  w.half_width_ = w.spec_.width / 2.0;
  w.rasterize_road();
  return w;
}

World World::from_maze(WorldSpec spec, std::vector<std::string> layout, double cell, std::vector<Vec2> route) {
  if (layout.empty() || layout.front().empty()) throw Error("maze layout is empty");
  World w;
  w.spec_ = std::move(spec);
  w.spec_.kind = WorldKind::mazeworld;
  w.maze_cell_ = cell;
  w.half_width_ = cell / 2.0;
  w.maze_rows_ = static_cast<int>(layout.size());
  w.maze_cols_ = static_cast<int>(layout.front().size());
  w.maze_.assign(static_cast<std::size_t>(w.maze_rows_) * w.maze_cols_, 0);
  for (int r = 0; r < w.maze_rows_; ++r) {
    const auto& row = layout[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != w.maze_cols_) throw Error("maze layout rows differ in length");
    for (int c = 0; c < w.maze_cols_; ++c) w.maze_[static_cast<std::size_t>(r) * w.maze_cols_ + c] = row[static_cast<std::size_t>(c)] != '#';
  }
  if (!route.empty()) w.path_ = Path(std::move(route), 0.25);
  return w;
}

void World::rasterize_road() {
  const auto& pts = path_.points();
  Vec2 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  Vec2 hi{-lo.x, -lo.y};
  for (Vec2 p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  raster_res_ = kRasterRes;
  raster_origin_ = {lo.x - kRasterMargin, lo.y - kRasterMargin};
  raster_nx_ = static_cast<int>((hi.x - lo.x + 2.0 * kRasterMargin) / raster_res_) + 1;
  raster_ny_ = static_cast<int>((hi.y - lo.y + 2.0 * kRasterMargin) / raster_res_) + 1;
  const auto cells = static_cast<std::size_t>(raster_nx_) * raster_ny_;
  raster_.assign(cells, cls(SemClass::offroad));
  std::vector<float> best(cells, std::numeric_limits<float>::max());

  const double reach = half_width_ + 0.5;
  const int rc = static_cast<int>(std::ceil(reach / raster_res_));
  const double sp = path_.spacing();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec2 a = pts[i];
    const Vec2 t = path_.tangent_at(static_cast<double>(i) * sp + sp / 2.0);
    const double s = static_cast<double>(i) * sp;
    const int cx = static_cast<int>((a.x - raster_origin_.x) / raster_res_);
    const int cy = static_cast<int>((a.y - raster_origin_.y) / raster_res_);
    for (int y = std::max(0, cy - rc); y <= std::min(raster_ny_ - 1, cy + rc); ++y) {
      for (int x = std::max(0, cx - rc); x <= std::min(raster_nx_ - 1, cx + rc); ++x) {
        const Vec2 p{raster_origin_.x + (x + 0.5) * raster_res_, raster_origin_.y + (y + 0.5) * raster_res_};
        const Vec2 d = p - a;
        const auto dist = static_cast<float>(d.norm());
        const auto idx = static_cast<std::size_t>(y) * raster_nx_ + x;
        if (dist >= best[idx]) continue;
        best[idx] = dist;
        const double along = d.dot(t);
        const double lat = std::abs(t.cross(d));
        uint8_t c = cls(SemClass::offroad);
        if (lat <= half_width_) {
          const double arc = path_.wrap(s + along);
          c = (lat <= kMarkingHalfWidth && std::fmod(arc, kDashPeriod) < kDashOn) ? cls(SemClass::marking)
                                                                                 : cls(SemClass::road);
        }
        raster_[idx] = c;
      }
    }
  }
}

World generate_world(const WorldSpec& spec) {
  validate(spec);
  std::string last;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(attempt)));
    try {
      switch (spec.kind) {
        case WorldKind::trackworld: return build_track(spec, rng);
        case WorldKind::roadworld: return build_road(spec, rng);
        case WorldKind::mazeworld: return build_maze(spec, rng);
      }
    } catch (const Degenerate& d) {
      last = d.why;
    }
  }
  throw Error("world generation failed after " + std::to_string(kMaxAttempts) + " attempts: " + last);
}

World straight_test_world(double straight_length, StyleSpec style) {
  WorldSpec spec;
  spec.kind = WorldKind::roadworld;
  spec.length = 2.0 * straight_length + 2.0 * kPi * 30.0;
  spec.style = style;
  spec.distractor_density = 0.0;
  const double r = 30.0;
  // Counter-clockwise stadium; the bottom straight runs along +x from the origin.
  std::vector<Vec2> poly;
  auto arc = [&](Vec2 c, double from) {
    for (int k = 0; k < 200; ++k) {
      const double a = from + kPi * k / 200.0;
      poly.push_back(c + r * Vec2{std::cos(a), std::sin(a)});
    }
  };
  poly.push_back({0.0, 0.0});
  arc({straight_length, r}, -kPi / 2.0);
  poly.push_back({straight_length, 2.0 * r});
  arc({0.0, r}, kPi / 2.0);
  return World::from_path(spec, Path(std::move(poly), 0.25));
}

// ---------------------------------------------------------------------------

Vec2 to_ego(const AgentState& agent, Vec2 p) {
  const Vec2 d = p - agent.position;
  const double c = std::cos(agent.heading);
  const double s = std::sin(agent.heading);
  return {d.x * s - d.y * c, d.x * c + d.y * s};
}

Vec2 from_ego(const AgentState& agent, Vec2 e) {
  const double c = std::cos(agent.heading);
  const double s = std::sin(agent.heading);
  return agent.position + Vec2{e.x * s + e.y * c, -e.x * c + e.y * s};
}

double expert_offset(const World& world, double s, double t) {
  const Path& path = world.path();
  double offset = 0.0;
  for (const auto& p : world.props()) {
    if (!p.avoid) continue;
    const double so = p.moving ? p.path_s + p.speed * t : p.path_s;
    const double delta = std::abs(cyclic_delta(so, s, path.length()));
    const double full = along_extent(p) + kFullMargin;
    if (delta >= full + kRampLength) continue;
    const double w = delta <= full ? 1.0 : 0.5 * (1.0 + std::cos(kPi * (delta - full) / kRampLength));
    const double need = across_extent(p) + kExpertClearance;
    const double target = p.lateral >= 0.0 ? p.lateral - need : p.lateral + need;
    offset += w * target;
  }
  const double margin = world.kind() == WorldKind::mazeworld ? 1.0 : 0.3;
  const double limit = world.half_width() - margin;
  return std::clamp(offset, -limit, limit);
}

Waypoints expert_waypoints(const World& world, const AgentState& agent) {
  const Path& path = world.path();
  if (path.empty()) throw Error("expert_waypoints: world has no route");
  const double s0 = path.project(agent.position);
  Waypoints w;
  w.points.reserve(kNumWaypoints);
  for (int k = 1; k <= kNumWaypoints; ++k) {
    const double s = s0 + k * kWaypointSpacing;
    const Vec2 p = path.point_at(s) + expert_offset(world, s, agent.time) * path.normal_at(s);
    w.points.push_back(to_ego(agent, p));
  }
  return w;
}

Events check_events(const World& world, const AgentState& agent) {
  Events e;
  if (world.kind() == WorldKind::mazeworld) {
    e.collision = world.in_wall(agent.position);
  } else {
    e.offroad = !world.navigable(agent.position);
  }
  if (world.prop_hit(agent.position, agent.time)) e.collision = true;
  return e;
}

StepResult step(const World& world, const AgentState& agent, Control control, double dt) {
  const double steer = std::isfinite(control.steer) ? std::clamp(control.steer, -1.0, 1.0) : 0.0;
  const double throttle = std::isfinite(control.throttle) ? std::clamp(control.throttle, 0.0, 1.0) : 0.0;
  AgentState next = agent;
  next.heading = wrap_angle(agent.heading + steer * kMaxYawRate * dt);
  next.speed = kMaxSpeed * throttle;
  next.position = agent.position + (next.speed * dt) * Vec2{std::cos(next.heading), std::sin(next.heading)};
  next.odometer = agent.odometer + next.speed * dt;
  next.time = agent.time + dt;
  return {next, check_events(world, next)};
}

// ---------------------------------------------------------------------------

namespace {

AgentState pose_on_path(const World& world, double s, double t, double lateral, double dheading) {
  const Path& path = world.path();
  auto deflected = [&](double u) { return path.point_at(u) + expert_offset(world, u, t) * path.normal_at(u); };
  const Vec2 ahead = deflected(s + 0.5);
  const Vec2 behind = deflected(s - 0.5);
  AgentState a;
  a.position = deflected(s) + lateral * path.normal_at(s);
  a.heading = wrap_angle(std::atan2(ahead.y - behind.y, ahead.x - behind.x) + dheading);
  a.speed = kMaxSpeed;
  a.time = t;
  return a;
}

}  // namespace

AgentState spawn_pose(const World& world, uint64_t seed) {
  if (world.path().empty()) throw Error("spawn_pose: world has no route");
  Rng rng(seed);
  AgentState fallback;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const double s = rng.uniform(0.0, world.path().length());
    AgentState a = pose_on_path(world, s, 0.0, 0.0, 0.0);
    if (attempt == 0) fallback = a;
    if (check_events(world, a).any()) continue;
    bool clear = true;
    for (const auto& p : world.props()) {
      if (!p.avoid) continue;
      if (std::abs(cyclic_delta(p.path_s, s, world.path().length())) < 15.0) clear = false;
    }
    if (clear) return a;
  }
  return fallback;
}

Dataset generate_dataset(const World& world, int n, uint64_t seed, const DatasetOptions& opts) {
  if (n <= 0) throw Error("generate_dataset: n must be positive");
  if (world.path().empty()) throw Error("generate_dataset: world has no route");
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  const double len = world.path().length();
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<uint64_t>(i)));
    AgentState pose;
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double s = rng.uniform(0.0, len);
      const double t = rng.uniform(0.0, opts.time_span);
      if (opts.placement == Placement::on_expert_path) {
        pose = pose_on_path(world, s, t, rng.uniform(-1.0, 1.0) * opts.lateral_perturbation,
                            rng.uniform(-1.0, 1.0) * opts.heading_perturbation);
      } else {
        pose = pose_on_path(world, s, t, 0.0, rng.uniform(-kPi / 2.0, kPi / 2.0));
        pose.position = world.path().point_at(s) + rng.uniform(-1.0, 1.0) * world.half_width() * world.path().normal_at(s);
      }
      if (!check_events(world, pose).any()) break;
    }
    RenderOptions ro;
    ro.mask = opts.mask;
    ro.lighting = 1.0 + rng.uniform(-1.0, 1.0) * opts.lighting_jitter;
    out.push_back(render(world, pose, ro));
  }
  return out;
}

}  // namespace tdl
