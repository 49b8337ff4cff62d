#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/geometry.hpp"
#include "trailmap/raster.hpp"

namespace trailmap {

struct LaneSegment {
  std::string id;
  std::vector<Vec2> points;  // driving direction = point order
};

struct LaneGraph {
  std::vector<LaneSegment> segments;
  std::map<std::string, std::vector<std::string>> successors;

  // Throws ValidationError on short polylines, duplicate or dangling ids, or
  // successor starts more than 0.1 m from the predecessor's end.
  void validate() const;

  std::size_t index_of(const std::string& id) const;  // throws when absent
  std::size_t adjacency_count() const;
};

struct CenterlinePath {
  std::vector<Vec2> points;
  std::vector<std::string> source_segments;
};

struct GtConfig {
  double cov_threshold = 0.5;
  double yaw_tolerance = 0.7853981633974483;  // pi / 4
  int m = 20;
  std::size_t max_paths = 64;
  double sample_step = 0.1;       // arclength step for coverage integration
  double min_path_length = 1.0;   // meters; shorter clipped paths are dropped
};

inline constexpr double kConnectivityTolerance = 0.1;

nlohmann::json lane_graph_to_json(const LaneGraph& g);
LaneGraph lane_graph_from_json(const nlohmann::json& j);
LaneGraph load_lane_graph(const std::filesystem::path& path);
void save_lane_graph(const std::filesystem::path& path, const LaneGraph& g);

// Global frame -> tile frame in meters.
LaneGraph to_tile_frame(const LaneGraph& g, const GridSpec& spec);

// Clips every segment (tile-frame meters) to the tile rectangle. A segment
// leaving and re-entering the tile becomes several pieces "<id>#k"; links
// survive only between pieces that keep the original shared endpoint.
LaneGraph clip_to_tile(const LaneGraph& g, const GridSpec& spec);

// Fraction of a tile-frame polyline's arclength that is supported by trail
// density in a direction bin within `yaw_tolerance` of the local heading.
double trail_support(const std::vector<Vec2>& polyline, const GridTile& tile, double yaw_tolerance,
                     double sample_step = 0.1);

// Keeps segments (tile-frame meters) with support >= cov_threshold.
LaneGraph filter_by_trails(const LaneGraph& g, const GridTile& tile, double cov_threshold, double yaw_tolerance,
                           double sample_step = 0.1);

// Every maximal directed path from a source (no predecessor in `g`) to a
// sink, never revisiting a segment. Segments only reachable through cycles
// seed their own paths. Beyond `max_paths`, the longest paths are kept.
std::vector<CenterlinePath> enumerate_paths(const LaneGraph& g, std::size_t max_paths = 64);

// m points uniformly spaced by arclength; ends preserved.
CenterlinePath resample_path(const CenterlinePath& path, int m);

// Full per-tile derivation: global graph -> tile frame -> clip -> filter ->
// enumerate -> resample. `raw` is the pre-smoothing tile.
std::vector<CenterlinePath> derive_ground_truth(const LaneGraph& global_graph, const GridTile& raw,
                                                const GtConfig& config);

nlohmann::json gt_paths_to_json(const std::string& tile_id, const std::vector<CenterlinePath>& paths);
std::vector<CenterlinePath> gt_paths_from_json(const nlohmann::json& j);

}  // namespace trailmap
