#include <algorithm>
#include <cmath>
#include <limits>

#include "tdl/worlds.hpp"

namespace tdl {

Path::Path(std::vector<Vec2> polyline, double spacing) {
  if (polyline.size() < 3) throw Error("path needs at least 3 vertices");
  if (!(spacing > 0.0)) throw Error("path spacing must be positive");
  if (polyline.front() == polyline.back()) polyline.pop_back();

  const std::size_t m = polyline.size();
  std::vector<double> cum(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) cum[i + 1] = cum[i] + (polyline[(i + 1) % m] - polyline[i]).norm();
  const double total = cum[m];
  if (!(total > 0.0)) throw Error("path has zero length");

  const auto n = std::max<std::size_t>(3, static_cast<std::size_t>(std::llround(total / spacing)));
  spacing_ = total / static_cast<double>(n);
  length_ = total;
  pts_.reserve(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * spacing_;
    while (seg + 1 < m && cum[seg + 1] <= s) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double f = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
    const Vec2 a = polyline[seg];
    const Vec2 b = polyline[(seg + 1) % m];
    pts_.push_back(a + f * (b - a));
  }

  Vec2 lo{std::numeric_limits<double>::max(), std::numeric_limits<double>::max()};
  Vec2 hi{-lo.x, -lo.y};
  for (Vec2 p : pts_) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  grid_origin_ = lo;
  grid_nx_ = static_cast<int>((hi.x - lo.x) / grid_cell_) + 1;
  grid_ny_ = static_cast<int>((hi.y - lo.y) / grid_cell_) + 1;
  grid_.assign(static_cast<std::size_t>(grid_nx_) * grid_ny_, -1);
  next_.assign(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const int cx = static_cast<int>((pts_[i].x - lo.x) / grid_cell_);
    const int cy = static_cast<int>((pts_[i].y - lo.y) / grid_cell_);
    auto& head = grid_[static_cast<std::size_t>(cy) * grid_nx_ + cx];
    next_[i] = head;
    head = static_cast<int>(i);
  }
}

double Path::wrap(double s) const {
  double w = std::fmod(s, length_);
  if (w < 0.0) w += length_;
  return w >= length_ ? 0.0 : w;
}

Vec2 Path::point_at(double s) const {
  const double w = wrap(s) / spacing_;
  const auto n = pts_.size();
  const auto i = std::min(static_cast<std::size_t>(w), n - 1);
  const double f = w - static_cast<double>(i);
  const Vec2 a = pts_[i];
  const Vec2 b = pts_[(i + 1) % n];
  return a + f * (b - a);
}

Vec2 Path::tangent_at(double s) const {
  const auto n = pts_.size();
  const auto i = std::min(static_cast<std::size_t>(wrap(s) / spacing_), n - 1);
  const Vec2 d = pts_[(i + 1) % n] - pts_[i];
  return (1.0 / d.norm()) * d;
}

Vec2 Path::normal_at(double s) const {
  const Vec2 t = tangent_at(s);
  return {-t.y, t.x};
}

double Path::project(Vec2 p, double* lateral) const {
  const auto n = pts_.size();
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::max();
  auto consider = [&](std::size_t i) {
    const Vec2 d = p - pts_[i];
    const double d2 = d.dot(d);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  };

  const double gx = (p.x - grid_origin_.x) / grid_cell_;
  const double gy = (p.y - grid_origin_.y) / grid_cell_;
  if (gx < 0.0 || gy < 0.0 || gx >= grid_nx_ || gy >= grid_ny_) {
    for (std::size_t i = 0; i < n; ++i) consider(i);
  } else {
    const int cx = static_cast<int>(gx);
    const int cy = static_cast<int>(gy);
    const int max_ring = std::max(grid_nx_, grid_ny_);
    for (int r = 0; r <= max_ring; ++r) {
      // Every point in ring r is at least (r - 1) cells away.
      if (r >= 1 && best_d2 < std::numeric_limits<double>::max()) {
        const double ring_min = (r - 1) * grid_cell_;
        if (ring_min * ring_min > best_d2) break;
      }
      for (int y = cy - r; y <= cy + r; ++y) {
        if (y < 0 || y >= grid_ny_) continue;
        for (int x = cx - r; x <= cx + r; ++x) {
          if (x < 0 || x >= grid_nx_) continue;
          if (std::max(std::abs(x - cx), std::abs(y - cy)) != r) continue;
          for (int i = grid_[static_cast<std::size_t>(y) * grid_nx_ + x]; i >= 0; i = next_[static_cast<std::size_t>(i)]) {
            consider(static_cast<std::size_t>(i));
          }
        }
      }
    }
  }

  // Refine on the two segments adjacent to the nearest sample.
  double best_s = static_cast<double>(best) * spacing_;
  Vec2 best_foot = pts_[best];
  Vec2 best_tan = pts_[(best + 1) % n] - pts_[best];
  double refine_d2 = std::numeric_limits<double>::max();
  for (std::size_t a : {(best + n - 1) % n, best}) {
    const Vec2 pa = pts_[a];
    const Vec2 d = pts_[(a + 1) % n] - pa;
    const double f = std::clamp((p - pa).dot(d) / d.dot(d), 0.0, 1.0);
    const Vec2 foot = pa + f * d;
    const Vec2 e = p - foot;
    if (e.dot(e) < refine_d2) {
      refine_d2 = e.dot(e);
      best_s = (static_cast<double>(a) + f) * spacing_;
      best_foot = foot;
      best_tan = d;
    }
  }
  if (lateral) *lateral = best_tan.cross(p - best_foot) / best_tan.norm();
  return wrap(best_s);
}

double Path::curvature_at(double s) const {
  const Vec2 a = tangent_at(s - 1.0);
  const Vec2 b = tangent_at(s + 1.0);
  return std::abs(std::atan2(a.cross(b), a.dot(b))) / 2.0;
}

double Path::min_separation(double min_arc) const {
  const auto n = pts_.size();
  double best = std::numeric_limits<double>::max();
  const double half = length_ / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int cx = static_cast<int>((pts_[i].x - grid_origin_.x) / grid_cell_);
    const int cy = static_cast<int>((pts_[i].y - grid_origin_.y) / grid_cell_);
    const int reach = 3;
    for (int y = std::max(0, cy - reach); y <= std::min(grid_ny_ - 1, cy + reach); ++y) {
      for (int x = std::max(0, cx - reach); x <= std::min(grid_nx_ - 1, cx + reach); ++x) {
        for (int j = grid_[static_cast<std::size_t>(y) * grid_nx_ + x]; j >= 0; j = next_[static_cast<std::size_t>(j)]) {
          double arc = std::abs(static_cast<double>(j) - static_cast<double>(i)) * spacing_;
          if (arc > half) arc = length_ - arc;
          if (arc <= min_arc) continue;
          best = std::min(best, (pts_[static_cast<std::size_t>(j)] - pts_[i]).norm());
        }
      }
    }
  }
  return best;
}

}  // namespace tdl
