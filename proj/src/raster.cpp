#include "trailmap/raster.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <string>

#include "trailmap/errors.hpp"
#include "trailmap/raster_kernels.hpp"

namespace trailmap {

GridTile GridTile::empty(const GridSpec& spec) {
  spec.validate();
  GridTile t;
  t.spec = spec;
  const std::size_t cells = spec.cells();
  t.dir.assign(cells * static_cast<std::size_t>(spec.n), 0.0);
  t.speed.assign(cells, 0.0);
  t.speed_sum.assign(cells, 0.0);
  t.speed_count.assign(cells, 0);
  return t;
}

double GridTile::density(std::size_t cell_index) const {
  double s = 0.0;
  const auto nn = static_cast<std::size_t>(n());
  for (std::size_t j = 0; j < nn; ++j) s += dir[cell_index * nn + j];
  return s;
}

double GridTile::total_mass() const {
  double s = 0.0;
  for (double v : dir) s += v;
  return s;
}

std::vector<double> GridTile::to_tensor() const {
  const auto nn = static_cast<std::size_t>(n());
  const std::size_t cells = speed.size();
  std::vector<double> out(cells * (nn + 1));
  for (std::size_t c = 0; c < cells; ++c) {
    std::copy_n(dir.begin() + static_cast<std::ptrdiff_t>(c * nn), nn, out.begin() + static_cast<std::ptrdiff_t>(c * (nn + 1)));
    out[c * (nn + 1) + nn] = speed[c];
  }
  return out;
}

double bin_edge(int k, int n) {
  if (k >= n) return std::numbers::pi;
  return -std::numbers::pi + k * (2.0 * std::numbers::pi / n);
}

int bin_index(double yaw, int n) {
  if (n < 1) throw DomainError("bin count must be >= 1");
  if (!(yaw > -std::numbers::pi && yaw <= std::numbers::pi)) {
    throw DomainError("yaw " + std::to_string(yaw) + " outside (-pi, pi]");
  }
  int j = static_cast<int>(std::ceil((yaw + std::numbers::pi) * n / (2.0 * std::numbers::pi)));
  j = std::clamp(j, 1, n);
  // The estimate can be off by one next to an edge; settle against the edges.
  while (j > 1 && yaw <= bin_edge(j - 1, n)) --j;
  while (j < n && yaw > bin_edge(j, n)) ++j;
  return j;
}

double bin_center(int j, int n) { return -std::numbers::pi + (j - 0.5) * (2.0 * std::numbers::pi / n); }

namespace {

struct Footprint {
  std::vector<std::uint32_t> cells;
  std::size_t channel = 0;
};

Footprint segment_footprint(const GridTile& tile, const TrailSegment& seg) {
  const GridSpec& spec = tile.spec;
  const int w = tile.w();
  const int h = tile.h();
  const double radius = seg.width_m / (2.0 * spec.r);
  Vec2 a = world_to_tile(spec, seg.a.xy());
  Vec2 b = world_to_tile(spec, seg.b.xy());

  // Geometric clip to the tile grown by the footprint radius; nothing beyond
  // that can reach a cell center.
  const Rect grown{-radius - 1.0, -radius - 1.0, w + radius + 1.0, h + radius + 1.0};
  double t0 = 0.0;
  double t1 = 1.0;
  if (!clip_segment(a, b, grown, t0, t1)) return {};
  if (t0 > 0.0 || t1 < 1.0) {
    const Vec2 ca = lerp(a, b, t0);
    const Vec2 cb = lerp(a, b, t1);
    a = ca;
    b = cb;
  }
  // Direction bins are taken in the tile frame.
  const int bin = bin_index(wrap_angle(seg.yaw - spec.rotation), spec.n);
  return {kernels::footprint_cells(a, b, radius, w, h), static_cast<std::size_t>(bin - 1)};
}

void add_cells(GridTile& tile, std::span<const std::uint32_t> cells, std::size_t channel, double speed) {
  const auto nn = static_cast<std::size_t>(tile.n());
  for (std::uint32_t c : cells) {
    tile.dir[c * nn + channel] += 1.0;
    tile.speed_sum[c] += speed;
    tile.speed_count[c] += 1;
  }
}

}  // namespace

std::vector<std::uint32_t> stamp_segment(GridTile& tile, const TrailSegment& seg) {
  Footprint fp = segment_footprint(tile, seg);
  add_cells(tile, fp.cells, fp.channel, seg.speed);
  return std::move(fp.cells);
}

void stamp_trail(GridTile& tile, const Trail& trail) {
  std::vector<std::uint32_t> previous;
  std::vector<std::uint32_t> fresh;
  for (const TrailSegment& seg : segments(trail)) {
    Footprint fp = segment_footprint(tile, seg);
    fresh.clear();
    std::set_difference(fp.cells.begin(), fp.cells.end(), previous.begin(), previous.end(),
                        std::back_inserter(fresh));
    add_cells(tile, fresh, fp.channel, seg.speed);
    previous = std::move(fp.cells);
  }
}

void finalize_speed(GridTile& tile) {
  for (std::size_t c = 0; c < tile.speed.size(); ++c) {
    tile.speed[c] = tile.speed_count[c] > 0 ? tile.speed_sum[c] / tile.speed_count[c] : 0.0;
  }
}

GridTile rasterize(const GridSpec& spec, std::span<const Trail> trails) {
  GridTile tile = GridTile::empty(spec);
  for (const Trail& t : trails) stamp_trail(tile, t);
  finalize_speed(tile);
  return tile;
}

namespace {

template <typename Convolve>
GridTile smooth_with(const GridTile& tile, double sigma, Convolve convolve) {
  if (sigma < 0.0) throw DomainError("sigma must be >= 0");
  GridTile out = tile;
  out.sigma_applied = sigma;
  if (sigma == 0.0) return out;
  const auto taps = kernels::gaussian_taps(sigma);
  convolve(std::span<double>(out.dir), out.w(), out.h(), out.n(), std::span<const double>(taps));
  convolve(std::span<double>(out.speed), out.w(), out.h(), 1, std::span<const double>(taps));
  return out;
}

}  // namespace

GridTile gaussian_smooth(const GridTile& tile, double sigma) {
  return smooth_with(tile, sigma, [](auto... args) { kernels::separable_convolve(args...); });
}

GridTile gaussian_smooth_reference(const GridTile& tile, double sigma) {
  return smooth_with(tile, sigma, [](auto... args) { kernels::separable_convolve_reference(args...); });
}

std::vector<double> normalize_tensor(std::span<const double> tensor, int n, double v_max, bool include_speed) {
  if (!(v_max > 0.0)) throw DomainError("v_max must be > 0");
  const auto in_c = static_cast<std::size_t>(n) + 1;
  const std::size_t out_c = static_cast<std::size_t>(n) + (include_speed ? 1 : 0);
  const std::size_t cells = tensor.size() / in_c;
  std::vector<double> out(cells * out_c);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
      out[c * out_c + j] = std::log1p(std::max(0.0, tensor[c * in_c + j]));
    }
    if (include_speed) out[c * out_c + n] = std::clamp(tensor[c * in_c + n] / v_max, 0.0, 1.0);
  }
  return out;
}

std::vector<double> normalize_for_model(const GridTile& tile, double v_max, bool include_speed) {
  return normalize_tensor(tile.to_tensor(), tile.n(), v_max, include_speed);
}

}  // namespace trailmap
