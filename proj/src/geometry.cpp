#include "trailmap/geometry.hpp"

#include <algorithm>

namespace trailmap {

bool clip_segment(Vec2 a, Vec2 b, const Rect& r, double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1.0;
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - r.min_x, r.max_x - a.x, a.y - r.min_y, r.max_y - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
  }
  return t0 <= t1;
}

double polyline_length(std::span<const Vec2> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

std::vector<double> cumulative_length(std::span<const Vec2> pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + distance(pts[i - 1], pts[i]);
  return cum;
}

Vec2 point_at_arclength(std::span<const Vec2> pts, std::span<const double> cum, double s) {
  if (s <= 0.0) return pts.front();
  if (s >= cum.back()) return pts.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - cum.begin());  // cum[i-1] <= s < cum[i]
  const double seg = cum[i] - cum[i - 1];
  const double t = seg > 0.0 ? (s - cum[i - 1]) / seg : 0.0;
  return lerp(pts[i - 1], pts[i], t);
}

std::vector<Vec2> densify(std::span<const Vec2> pts, double step) {
  std::vector<Vec2> out;
  if (pts.empty()) return out;
  out.push_back(pts.front());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double len = distance(pts[i - 1], pts[i]);
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / step)));
    for (std::size_t k = 1; k < pieces; ++k) {
      out.push_back(lerp(pts[i - 1], pts[i], static_cast<double>(k) / static_cast<double>(pieces)));
    }
    out.push_back(pts[i]);
  }
  return out;
}

std::vector<std::vector<Vec2>> clip_polyline(std::span<const Vec2> pts, const Rect& r) {
  std::vector<std::vector<Vec2>> pieces;
  std::vector<Vec2> cur;
  auto flush = [&] {
    if (cur.size() >= 2) pieces.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 1; i < pts.size(); ++i) {
    double t0 = 0.0;
    double t1 = 1.0;
    if (!clip_segment(pts[i - 1], pts[i], r, t0, t1)) {
      flush();
      continue;
    }
    const Vec2 a = t0 > 0.0 ? lerp(pts[i - 1], pts[i], t0) : pts[i - 1];
    const Vec2 b = t1 < 1.0 ? lerp(pts[i - 1], pts[i], t1) : pts[i];
    if (cur.empty() || !(cur.back() == a)) {
      flush();
      cur.push_back(a);
    }
    if (!(b == cur.back())) cur.push_back(b);
    if (t1 < 1.0) flush();
  }
  flush();
  return pieces;
}

}  // namespace trailmap
