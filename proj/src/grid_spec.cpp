#include "trailmap/grid_spec.hpp"

#include <cmath>
#include <string>

#include "trailmap/errors.hpp"

namespace trailmap {

namespace {

int integral_ratio(double extent, double r, const char* what) {
  const double q = extent / r;
  const double rq = std::round(q);
  if (!(rq >= 1.0) || std::abs(q - rq) > 1e-9 * std::max(1.0, rq)) {
    throw ValidationError(std::string(what) + " / r must be a positive integer");
  }
  return static_cast<int>(rq);
}

}  // namespace

void GridSpec::validate() const {
  if (!(r > 0.0)) throw ValidationError("grid resolution r must be > 0");
  if (n < 1) throw ValidationError("direction bin count n must be >= 1");
  integral_ratio(w_glob, r, "w_glob");
  integral_ratio(h_glob, r, "h_glob");
}

int GridSpec::w_grid() const { return integral_ratio(w_glob, r, "w_glob"); }
int GridSpec::h_grid() const { return integral_ratio(h_glob, r, "h_glob"); }

Vec2 world_to_tile(const GridSpec& spec, Vec2 p) { return world_to_tile_m(spec, p) * (1.0 / spec.r); }

Vec2 tile_to_world(const GridSpec& spec, Vec2 uv) { return tile_m_to_world(spec, uv * spec.r); }

Vec2 world_to_tile_m(const GridSpec& spec, Vec2 p) { return rotate(p - spec.origin, -spec.rotation); }

Vec2 tile_m_to_world(const GridSpec& spec, Vec2 p) { return rotate(p, spec.rotation) + spec.origin; }

GridSpec centered_spec(GridSpec tmpl, Vec2 center, double rotation) {
  tmpl.rotation = rotation;
  tmpl.origin = center - rotate({tmpl.w_glob / 2.0, tmpl.h_glob / 2.0}, rotation);
  return tmpl;
}

Vec2 tile_center_world(const GridSpec& spec) { return tile_m_to_world(spec, {spec.w_glob / 2.0, spec.h_glob / 2.0}); }

}  // namespace trailmap
