#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/geometry.hpp"
#include "trailmap/grid_spec.hpp"

namespace trailmap {

// 8-bit grayscale PNG, rows top to bottom.
void write_png_gray(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> pixels);

struct ChannelImage {
  std::string file;
  double min = 0.0;
  double max = 0.0;
};

// One PNG per channel of a [w x h x c] tensor, min-max scaled to 0..255.
// Image columns follow the tile u axis and rows run from high v to low v,
// so the tile frame appears with +v up. Constant channels map to 0.
std::vector<ChannelImage> write_channel_pngs(const std::filesystem::path& dir, const std::string& stem,
                                             std::span<const double> tensor, int w, int h, int channels);

struct ExportLine {
  std::vector<Vec2> points;  // global frame; order encodes driving direction
  nlohmann::json properties;
};

nlohmann::json feature_collection(std::span<const ExportLine> lines);

}  // namespace trailmap
