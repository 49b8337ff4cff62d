#include "trailmap/raster_kernels.hpp"

#include <algorithm>
#include <cmath>

namespace trailmap::kernels {

std::vector<std::uint32_t> footprint_cells(Vec2 a, Vec2 b, double radius, int w, int h) {
  std::vector<std::uint32_t> out;
  if (w <= 0 || h <= 0 || !(radius >= 0.0)) return out;
  const double r2 = radius * radius;
  // Centers sit at i + 0.5, so i ranges over [lo - 0.5, hi - 0.5].
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - radius - 0.5)));
  const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + radius - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - radius - 0.5)));
  const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + radius - 0.5)));
  for (int ix = x0; ix <= x1; ++ix) {
    for (int iy = y0; iy <= y1; ++iy) {
      const Vec2 c{ix + 0.5, iy + 0.5};
      if (point_segment_dist2(c, a, b) <= r2) {
        out.push_back(static_cast<std::uint32_t>(ix) * static_cast<std::uint32_t>(h) + static_cast<std::uint32_t>(iy));
      }
    }
  }
  return out;
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

namespace {

// One output element of the pass along x: data[(ix, iy, ch)] summed over taps.
inline double convolve_x(std::span<const double> src, int w, int h, int c, int ix, int iy, int ch,
                         std::span<const double> taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  double acc = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const int sx = ix + k;
    if (sx < 0 || sx >= w) continue;
    acc += taps[k + radius] * src[(static_cast<std::size_t>(sx) * h + iy) * c + ch];
  }
  return acc;
}

inline double convolve_y(std::span<const double> src, int h, int c, int ix, int iy, int ch,
                         std::span<const double> taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  double acc = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const int sy = iy + k;
    if (sy < 0 || sy >= h) continue;
    acc += taps[k + radius] * src[(static_cast<std::size_t>(ix) * h + sy) * c + ch];
  }
  return acc;
}

}  // namespace

void separable_convolve_reference(std::span<double> data, int w, int h, int c, std::span<const double> taps) {
  if (taps.size() <= 1) return;
  std::vector<double> tmp(data.size());
  for (int ix = 0; ix < w; ++ix)
    for (int iy = 0; iy < h; ++iy)
      for (int ch = 0; ch < c; ++ch)
        tmp[(static_cast<std::size_t>(ix) * h + iy) * c + ch] = convolve_x(data, w, h, c, ix, iy, ch, taps);
  for (int ix = 0; ix < w; ++ix)
    for (int iy = 0; iy < h; ++iy)
      for (int ch = 0; ch < c; ++ch)
        data[(static_cast<std::size_t>(ix) * h + iy) * c + ch] = convolve_y(tmp, h, c, ix, iy, ch, taps);
}

void separable_convolve(std::span<double> data, int w, int h, int c, std::span<const double> taps) {
  if (taps.size() <= 1) return;
  std::vector<double> tmp(data.size());
  std::span<const double> src = data;
#pragma omp parallel for schedule(static)
  for (int ix = 0; ix < w; ++ix)
    for (int iy = 0; iy < h; ++iy)
      for (int ch = 0; ch < c; ++ch)
        tmp[(static_cast<std::size_t>(ix) * h + iy) * c + ch] = convolve_x(src, w, h, c, ix, iy, ch, taps);
#pragma omp parallel for schedule(static)
  for (int ix = 0; ix < w; ++ix)
    for (int iy = 0; iy < h; ++iy)
      for (int ch = 0; ch < c; ++ch)
        data[(static_cast<std::size_t>(ix) * h + iy) * c + ch] = convolve_y(tmp, h, c, ix, iy, ch, taps);
}

}  // namespace trailmap::kernels
