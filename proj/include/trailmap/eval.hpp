#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/geometry.hpp"
#include "trailmap/raster.hpp"

namespace trailmap {

struct EvalConfig {
  std::vector<double> thresholds{0.5, 1.0, 1.5};
  double sample_step = 0.1;
  bool mask_enabled = true;

  void validate() const;
};

struct ScoredPolyline {
  std::vector<Vec2> points;  // tile frame, meters
  double score = 1.0;
};

// Everything needed to score one tile. `mask` is the pre-smoothing tile used
// for trail-area masking; it may be null when masking is off.
struct EvalTile {
  std::string tile_id;
  std::vector<ScoredPolyline> preds;
  std::vector<std::vector<Vec2>> gts;
  const GridTile* mask = nullptr;
};

struct ThresholdCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MatchedPair {
  std::string tile_id;
  std::size_t pred = 0;
  std::size_t gt = 0;
  double chamfer = 0.0;
};

struct TileBreakdown {
  std::string tile_id;
  std::size_t num_preds = 0;
  std::size_t num_gts = 0;
  std::size_t masked_pairs = 0;
  std::map<double, ThresholdCounts> counts;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::map<double, double> ap_per_threshold;
  double ap_mean = 0.0;
  std::map<double, ThresholdCounts> counts;
  std::map<double, std::vector<MatchedPair>> matches;
  std::vector<TileBreakdown> per_tile;
  bool masked = false;
  bool order_sensitive = false;  // all scores equal: ranking falls back to prediction order

  nlohmann::json to_json() const;
};

// Symmetric mean-of-nearest distance between the densified polylines.
double chamfer(std::span<const Vec2> pred, std::span<const Vec2> gt, double sample_step);

// Chamfer restricted to samples in cells with non-zero trail density.
// nullopt when either side has no sample left.
std::optional<double> masked_chamfer(std::span<const Vec2> pred, std::span<const Vec2> gt, const GridTile& tile,
                                     double sample_step);

// Pairwise [preds x gts] distances for one tile. Pairs that cannot be a
// match at any threshold <= `cutoff` may be reported as +inf, as may masked
// out pairs (counted in `masked_pairs`).
std::vector<double> pair_distances(const EvalTile& tile, const EvalConfig& config, double cutoff,
                                   std::size_t* masked_pairs = nullptr);

// Score-ordered greedy matching over all tiles with all-point interpolated
// PR area. `distances[t]` is the pair_distances matrix of tiles[t].
double ap_at(std::span<const EvalTile> tiles, std::span<const std::vector<double>> distances, double tau,
             ThresholdCounts* counts = nullptr, std::vector<MatchedPair>* matches = nullptr,
             std::vector<ThresholdCounts>* per_tile = nullptr);

EvalReport evaluate(std::span<const EvalTile> tiles, const EvalConfig& config);

// All-point interpolated area under a PR curve given the TP flag of each
// ranked prediction.
double average_precision(const std::vector<bool>& ranked_tp, std::size_t num_gt);

// Joins predictions, ground truth and mask tiles on tile id. Throws
// ValidationError listing every id missing from one of the inputs.
std::vector<EvalTile> align_eval_tiles(const std::map<std::string, std::vector<ScoredPolyline>>& preds,
                                       const std::map<std::string, std::vector<std::vector<Vec2>>>& gts,
                                       const std::map<std::string, GridTile>* masks);

}  // namespace trailmap
