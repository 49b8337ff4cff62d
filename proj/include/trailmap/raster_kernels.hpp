#pragma once

// Data-parallel raster kernels. Each kernel has a serial reference next to
// the OpenMP version; both perform the same floating-point operations in the
// same order per output element, so their results are bit-identical.

#include <cstdint>
#include <span>
#include <vector>

#include "trailmap/geometry.hpp"

namespace trailmap::kernels {

// Linear indices (ix * h + iy) of every cell of a w x h grid whose center
// (ix + 0.5, iy + 0.5) lies within `radius` of segment [a, b]. All inputs in
// cell units. Indices come out sorted ascending.
std::vector<std::uint32_t> footprint_cells(Vec2 a, Vec2 b, double radius, int w, int h);

// Normalized 1-D Gaussian taps for offsets -R..R, R = ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

// Convolves every channel of a channel-last [w x h x c] tensor with the
// separable kernel `taps` along both axes, zero padding at borders.
void separable_convolve_reference(std::span<double> data, int w, int h, int c, std::span<const double> taps);
void separable_convolve(std::span<double> data, int w, int h, int c, std::span<const double> taps);

}  // namespace trailmap::kernels
