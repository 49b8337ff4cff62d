#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "trailmap/grid_spec.hpp"
#include "trailmap/trails.hpp"

namespace trailmap {

// The (n + 1)-channel trail grid of one tile: n yaw-binned density channels
// followed by the mean-speed channel. Storage is row-major over (ix, iy).
struct GridTile {
  GridSpec spec;
  std::vector<double> dir;                 // [w x h x n]
  std::vector<double> speed;               // [w x h]
  std::vector<double> speed_sum;           // [w x h], accumulator
  std::vector<std::uint32_t> speed_count;  // [w x h], accumulator
  double sigma_applied = 0.0;

  static GridTile empty(const GridSpec& spec);

  int w() const { return spec.w_grid(); }
  int h() const { return spec.h_grid(); }
  int n() const { return spec.n; }

  std::size_t cell(int ix, int iy) const { return static_cast<std::size_t>(ix) * h() + iy; }
  double dir_at(int ix, int iy, int channel) const { return dir[cell(ix, iy) * n() + channel]; }

  // Sum over the direction channels of one cell.
  double density(std::size_t cell_index) const;
  double total_mass() const;

  // Channel-last [w x h x (n + 1)] tensor: direction channels then speed.
  std::vector<double> to_tensor() const;
};

// Edge k of the direction bins, k in [0, n]: -pi + k * 2pi / n, with the
// last edge pinned to +pi.
double bin_edge(int k, int n);

// Bin j in [1, n] with yaw in (edge(j - 1), edge(j)]. Throws DomainError for
// yaw outside (-pi, pi] or n < 1.
int bin_index(double yaw, int n);

// Bin-center heading of bin j (1-based).
double bin_center(int j, int n);

// Stamps one segment (global frame) into the tile. Returns the linear cell
// indices that were incremented, sorted ascending.
std::vector<std::uint32_t> stamp_segment(GridTile& tile, const TrailSegment& seg);

// Stamps every segment of a trail. Cells already stamped by the immediately
// preceding segment of the same trail are skipped.
void stamp_trail(GridTile& tile, const Trail& trail);

void finalize_speed(GridTile& tile);

// Stamps all trails and finalizes speed. No smoothing.
GridTile rasterize(const GridSpec& spec, std::span<const Trail> trails);

// Convolves all n + 1 channels with a normalized Gaussian (truncated at
// ceil(3 sigma), zero padding). sigma == 0 returns the input unchanged.
GridTile gaussian_smooth(const GridTile& tile, double sigma);
GridTile gaussian_smooth_reference(const GridTile& tile, double sigma);

// Network input: log1p on direction channels, speed / v_max clamped to
// [0, 1]. Output is channel-last [w x h x (n + include_speed)].
std::vector<double> normalize_for_model(const GridTile& tile, double v_max, bool include_speed = true);

// Same conditioning applied to a stored [w x h x (n + 1)] tensor.
std::vector<double> normalize_tensor(std::span<const double> tensor, int n, double v_max, bool include_speed = true);

}  // namespace trailmap
