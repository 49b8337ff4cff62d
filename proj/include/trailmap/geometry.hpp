#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace trailmap {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

inline Vec2 lerp(Vec2 a, Vec2 b, double t) { return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t}; }

// Maps any finite angle into (-pi, pi]. -pi itself maps to +pi.
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

// Heading of b - a in (-pi, pi].
inline double heading(Vec2 a, Vec2 b) { return wrap_angle(std::atan2(b.y - a.y, b.x - a.x)); }

// Absolute angular difference in [0, pi].
inline double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

// Squared distance from p to the closed segment [a, b].
inline double point_segment_dist2(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  if (t < 0.0) t = 0.0;
  if (t > 1.0) t = 1.0;
  const Vec2 d = p - (a + ab * t);
  return dot(d, d);
}

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool contains(Vec2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

// Liang-Barsky clip of segment [a, b] against rect. Returns false when the
// segment misses the rect entirely; otherwise t0 <= t1 bound the inside part.
bool clip_segment(Vec2 a, Vec2 b, const Rect& r, double& t0, double& t1);

double polyline_length(std::span<const Vec2> pts);

// Cumulative arclength at each vertex; front() == 0.
std::vector<double> cumulative_length(std::span<const Vec2> pts);

// Point at arclength s along the polyline (clamped to the ends).
Vec2 point_at_arclength(std::span<const Vec2> pts, std::span<const double> cum, double s);

// Subdivides every edge into ceil(len / step) equal pieces. Keeps all
// vertices, so consecutive samples are at most `step` apart.
std::vector<Vec2> densify(std::span<const Vec2> pts, double step);

// Splits a polyline into the maximal pieces lying inside rect.
std::vector<std::vector<Vec2>> clip_polyline(std::span<const Vec2> pts, const Rect& r);

}  // namespace trailmap
