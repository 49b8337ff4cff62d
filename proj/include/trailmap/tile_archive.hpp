#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/grid_spec.hpp"
#include "trailmap/raster.hpp"

namespace trailmap {

nlohmann::json grid_spec_to_json(const GridSpec& spec);
GridSpec grid_spec_from_json(const nlohmann::json& j);

// One tile of an archive directory. The tensors are [w x h x (n + 1)],
// channel-last: `grid` after smoothing, `raw` before.
struct ArchivedTile {
  std::string tile_id;
  std::string kind = "fixed";  // "fixed" or "augmented"
  GridSpec spec;
  double sigma = 0.0;
  std::vector<std::string> trail_ids;
  nlohmann::json augmentation;  // null for fixed tiles
  std::vector<double> grid;
  std::vector<double> raw;

  // Pre-smoothing tile rebuilt from `raw` (speed accumulators not restored).
  GridTile raw_tile() const;
};

// Raw little-endian float32 tensor files.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path, std::size_t expected_count);

// Writes <id>.grid.f32, <id>.raw.f32 and the <id>.json sidecar into `dir`.
void write_archived_tile(const std::filesystem::path& dir, const ArchivedTile& tile,
                         const nlohmann::json& provenance);

// Reads one tile back; `load_tensors` = false reads only the sidecar.
ArchivedTile read_archived_tile(const std::filesystem::path& dir, const std::string& tile_id,
                                bool load_tensors = true);

}  // namespace trailmap
