#include <algorithm>
#include <cmath>
#include <limits>

#include "tdl/worlds.hpp"

namespace tdl {

namespace {

constexpr double kMaxTrace = 200.0;
constexpr double kTextureCell = 0.5;
constexpr double kSpriteCell = 2.0;
constexpr double kSpriteRadius = 0.5;
constexpr double kPropCull = 80.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Hit {
  double t = kInf;
  uint8_t cls = 0;
  bool ground = false;
};

double hash_unit(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

uint64_t hash_cell(uint64_t seed, double x, double y, double z, double cell) {
  const auto qx = static_cast<int64_t>(std::floor(x / cell));
  const auto qy = static_cast<int64_t>(std::floor(y / cell));
  const auto qz = static_cast<int64_t>(std::floor(z / cell));
  return derive_seed(seed, static_cast<uint64_t>(qx), static_cast<uint64_t>(qy), static_cast<uint64_t>(qz));
}

/// First entry of a ray into a vertical cylinder, including its top cap.
double hit_cylinder(const double o[3], const double d[3], Vec2 c, double r, double height) {
  double best = kInf;
  const double ox = o[0] - c.x, oy = o[1] - c.y;
  const double a = d[0] * d[0] + d[1] * d[1];
  const double b = 2.0 * (ox * d[0] + oy * d[1]);
  const double cc = ox * ox + oy * oy - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (a > 0.0 && disc >= 0.0) {
    const double t = (-b - std::sqrt(disc)) / (2.0 * a);
    const double z = o[2] + t * d[2];
    if (t > 0.0 && z >= 0.0 && z <= height) best = t;
  }
  if (d[2] < 0.0 && o[2] > height) {
    const double t = (height - o[2]) / d[2];
    const double x = ox + t * d[0], y = oy + t * d[1];
    if (x * x + y * y <= r * r) best = std::min(best, t);
  }
  return best;
}

/// Slab test against an oriented box standing on the ground.
double hit_box(const double o[3], const double d[3], Vec2 c, double yaw, Vec2 half, double height) {
  const double cs = std::cos(yaw), sn = std::sin(yaw);
  const double rx = o[0] - c.x, ry = o[1] - c.y;
  const double lo[3] = {rx * cs + ry * sn, -rx * sn + ry * cs, o[2]};
  const double ld[3] = {d[0] * cs + d[1] * sn, -d[0] * sn + d[1] * cs, d[2]};
  const double mn[3] = {-half.x, -half.y, 0.0};
  const double mx[3] = {half.x, half.y, height};
  double t0 = -kInf, t1 = kInf;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ld[k]) < 1e-12) {
      if (lo[k] < mn[k] || lo[k] > mx[k]) return kInf;
      continue;
    }
    double a = (mn[k] - lo[k]) / ld[k];
    double b = (mx[k] - lo[k]) / ld[k];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return (t0 <= t1 && t0 > 0.0) ? t0 : kInf;
}

/// Grid traversal over maze wall cells; returns the wall-face entry if it is
/// reached below the wall top and before `limit`.
double hit_walls(const World& w, const double o[3], const double d[3], double limit) {
  const double cell = w.maze_cell();
  int cx = static_cast<int>(std::floor(o[0] / cell));
  int cy = static_cast<int>(std::floor(o[1] / cell));
  if (!w.maze_floor(cx, cy)) return 1e-3;
  const int sx = d[0] > 0.0 ? 1 : -1;
  const int sy = d[1] > 0.0 ? 1 : -1;
  const double dtx = std::abs(d[0]) > 1e-12 ? cell / std::abs(d[0]) : kInf;
  const double dty = std::abs(d[1]) > 1e-12 ? cell / std::abs(d[1]) : kInf;
  double tx = std::abs(d[0]) > 1e-12 ? ((sx > 0 ? (cx + 1) * cell : cx * cell) - o[0]) / d[0] : kInf;
  double ty = std::abs(d[1]) > 1e-12 ? ((sy > 0 ? (cy + 1) * cell : cy * cell) - o[1]) / d[1] : kInf;
  while (true) {
    double t;
    if (tx < ty) {
      t = tx;
      tx += dtx;
      cx += sx;
    } else {
      t = ty;
      ty += dty;
      cy += sy;
    }
    if (t > limit) return kInf;
    if (!w.maze_floor(cx, cy)) {
      const double z = o[2] + t * d[2];
      return (z >= 0.0 && z <= kWallHeight) ? t : kInf;
    }
  }
}

}  // namespace

uint32_t render_mask_for(Modality m) {
  switch (m) {
    case Modality::image: return render_image;
    case Modality::seg_camera: return render_seg_cam;
    case Modality::seg_map: return render_seg_map;
    case Modality::depth: return render_depth;
  }
  return 0;
}

std::array<double, 3> camera_ray(const Camera& cam, double heading, int row, int col) {
  const double tan_h = std::tan(cam.hfov / 2.0);
  const double tan_v = tan_h * kImageHeight / kImageWidth;
  const double u = ((col + 0.5) / kImageWidth * 2.0 - 1.0) * tan_h;
  const double v = (1.0 - (row + 0.5) / kImageHeight * 2.0) * tan_v;
  const double fx = std::cos(heading), fy = std::sin(heading);
  const double cp = std::cos(cam.pitch), sp = std::sin(cam.pitch);
  // forward (pitched down), right, and up axes of the camera
  const double f[3] = {cp * fx, cp * fy, -sp};
  const double r[3] = {fy, -fx, 0.0};
  const double up[3] = {sp * fx, sp * fy, cp};
  std::array<double, 3> d{};
  for (int k = 0; k < 3; ++k) d[static_cast<std::size_t>(k)] = f[k] + u * r[k] + v * up[k];
  const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  for (auto& x : d) x /= n;
  return d;
}

Sample render(const World& world, const AgentState& agent, const RenderOptions& opts) {
  Sample out;
  out.pose = agent;
  const StyleSpec& style = world.spec().style;
  const uint64_t tex_seed = derive_seed(world.spec().seed, 0x7e47);
  const bool want_cam = (opts.mask & (render_image | render_seg_cam | render_depth)) != 0;

  std::vector<PlacedProp> near;
  for (const auto& p : world.props_at(agent.time)) {
    if ((p.center - agent.position).norm() < kPropCull) near.push_back(p);
  }

  if (want_cam) {
    if (opts.mask & render_image) out.image = Image(kImageHeight, kImageWidth);
    if (opts.mask & render_seg_cam) out.seg_cam = SegMap(kImageHeight, kImageWidth);
    if (opts.mask & render_depth) out.depth = DepthMap(kImageHeight, kImageWidth);
    const double o[3] = {agent.position.x, agent.position.y, opts.camera.height};
    const double gain = style.lighting_gain * opts.lighting;
    const bool maze = world.kind() == WorldKind::mazeworld;

    for (int row = 0; row < kImageHeight; ++row) {
      for (int col = 0; col < kImageWidth; ++col) {
        const auto dir = camera_ray(opts.camera, agent.heading, row, col);
        const double d[3] = {dir[0], dir[1], dir[2]};
        Hit hit;
        if (d[2] < 0.0) {
          const double t = o[2] / -d[2];
          if (t <= kMaxTrace) {
            hit.t = t;
            hit.ground = true;
          }
        }
        for (const auto& p : near) {
          const Prop& prop = *p.prop;
          const double t = prop.shape == Prop::Shape::cylinder
                               ? hit_cylinder(o, d, p.center, prop.radius, prop.height)
                               : hit_box(o, d, p.center, p.yaw, prop.half_extent, prop.height);
          if (t < hit.t) {
            hit.t = t;
            hit.cls = prop.cls;
            hit.ground = false;
          }
        }
        if (maze) {
          const double t = hit_walls(world, o, d, std::min(hit.t, kMaxTrace));
          if (t < hit.t) {
            hit.t = t;
            hit.cls = static_cast<uint8_t>(SemClass::offroad);
            hit.ground = false;
          }
        }
        const double hx = o[0] + hit.t * d[0];
        const double hy = o[1] + hit.t * d[1];
        const double hz = o[2] + hit.t * d[2];
        if (hit.ground) hit.cls = world.ground_class({hx, hy});
        const bool sky = !std::isfinite(hit.t);
        const auto idx = static_cast<std::size_t>(row) * kImageWidth + col;

        if (opts.mask & render_seg_cam) out.seg_cam.ids[idx] = sky ? 0 : hit.cls;
        if (opts.mask & render_depth) {
          out.depth.meters[idx] = static_cast<float>(sky ? kMaxDepth : std::min(hit.t, kMaxDepth));
        }
        if (opts.mask & render_image) {
          std::array<double, 3> base = style.palette[sky ? 0 : hit.cls];
          double noise = 0.0;
          if (!sky) {
            noise = 2.0 * hash_unit(hash_cell(tex_seed, hx, hy, hit.ground ? 0.0 : hz, kTextureCell)) - 1.0;
            if (hit.ground && style.sprite_rate > 0.0) {
              const uint64_t h = hash_cell(tex_seed ^ 0x5b71e, hx, hy, 0.0, kSpriteCell);
              if (hash_unit(h) < style.sprite_rate) {
                const double sx = (std::floor(hx / kSpriteCell) + 0.5) * kSpriteCell;
                const double sy = (std::floor(hy / kSpriteCell) + 0.5) * kSpriteCell;
                if (std::hypot(hx - sx, hy - sy) < kSpriteRadius) {
                  for (int k = 0; k < 3; ++k) base[static_cast<std::size_t>(k)] = hash_unit(mix64(h + static_cast<uint64_t>(k) + 1));
                }
              }
            }
          }
          for (int k = 0; k < 3; ++k) {
            const double v = std::clamp(base[static_cast<std::size_t>(k)] * gain * (1.0 + style.texture_noise * noise), 0.0, 1.0);
            out.image.rgb[idx * 3 + static_cast<std::size_t>(k)] = static_cast<uint8_t>(std::lround(v * 255.0));
          }
        }
      }
    }
  }

  if (opts.mask & render_seg_map) {
    out.seg_map = SegMap(kMapSize, kMapSize);
    std::vector<PlacedProp> close;
    const double reach = kMapSize * kMapCell * 1.5;
    for (const auto& p : near) {
      if ((p.center - agent.position).norm() < reach + 5.0) close.push_back(p);
    }
    for (int r = 0; r < kMapSize; ++r) {
      for (int c = 0; c < kMapSize; ++c) {
        const Vec2 ego{(c + 0.5 - kMapSize / 2) * kMapCell, (kMapSize - 1 - r + 0.5) * kMapCell};
        const Vec2 p = from_ego(agent, ego);
        uint8_t cl = world.ground_class(p);
        for (const auto& placed : close) {
          if (footprint_contains(placed, p)) {
            cl = placed.prop->cls;
            break;
          }
        }
        out.seg_map.ids[static_cast<std::size_t>(r) * kMapSize + c] = cl;
      }
    }
  }

  if ((opts.mask & render_expert) && !world.path().empty()) out.expert = expert_waypoints(world, agent);
  return out;
}

}  // namespace tdl
