#include "trailmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "trailmap/errors.hpp"

namespace trailmap {

using nlohmann::json;

void EvalConfig::validate() const {
  if (thresholds.empty()) throw ValidationError("eval thresholds must be non-empty");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0)) throw ValidationError("eval thresholds must be positive");
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ValidationError("eval thresholds must be sorted");
  }
  if (!(sample_step > 0.0)) throw ValidationError("eval sample_step must be > 0");
}

namespace {

double mean_nearest(std::span<const Vec2> from, std::span<const Vec2> to) {
  double sum = 0.0;
  for (const Vec2& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& q : to) {
      const double dx = p.x - q.x;
      const double dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.size());
}

void require_polyline(std::span<const Vec2> p) {
  if (p.size() < 2) throw DomainError("chamfer needs polylines with at least 2 points");
}

Rect bounds(std::span<const Vec2> pts) {
  Rect r{pts[0].x, pts[0].y, pts[0].x, pts[0].y};
  for (const Vec2& p : pts) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

double rect_distance(Vec2 p, const Rect& r) {
  const double dx = std::max({r.min_x - p.x, 0.0, p.x - r.max_x});
  const double dy = std::max({r.min_y - p.y, 0.0, p.y - r.max_y});
  return std::hypot(dx, dy);
}

// Lower bound of the chamfer distance from distances to bounding boxes.
double chamfer_lower_bound(std::span<const Vec2> a, std::span<const Vec2> b) {
  const Rect ra = bounds(a);
  const Rect rb = bounds(b);
  double sa = 0.0;
  for (const Vec2& p : a) sa += rect_distance(p, rb);
  double sb = 0.0;
  for (const Vec2& p : b) sb += rect_distance(p, ra);
  return 0.5 * (sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size()));
}

std::vector<Vec2> keep_dense(std::span<const Vec2> pts, const GridTile& tile) {
  std::vector<Vec2> out;
  const int w = tile.w();
  const int h = tile.h();
  const double r = tile.spec.r;
  for (const Vec2& p : pts) {
    int ix = static_cast<int>(std::floor(p.x / r));
    int iy = static_cast<int>(std::floor(p.y / r));
    // Points on the far tile edge belong to the last cell.
    if (ix == w && p.x <= tile.spec.w_glob) ix = w - 1;
    if (iy == h && p.y <= tile.spec.h_glob) iy = h - 1;
    if (ix < 0 || iy < 0 || ix >= w || iy >= h) continue;
    if (tile.density(tile.cell(ix, iy)) > 0.0) out.push_back(p);
  }
  return out;
}

}  // namespace

double chamfer(std::span<const Vec2> pred, std::span<const Vec2> gt, double sample_step) {
  require_polyline(pred);
  require_polyline(gt);
  const auto a = densify(pred, sample_step);
  const auto b = densify(gt, sample_step);
  return 0.5 * (mean_nearest(a, b) + mean_nearest(b, a));
}

std::optional<double> masked_chamfer(std::span<const Vec2> pred, std::span<const Vec2> gt, const GridTile& tile,
                                     double sample_step) {
  require_polyline(pred);
  require_polyline(gt);
  const auto a = keep_dense(densify(pred, sample_step), tile);
  const auto b = keep_dense(densify(gt, sample_step), tile);
  if (a.empty() || b.empty()) return std::nullopt;
  return 0.5 * (mean_nearest(a, b) + mean_nearest(b, a));
}

std::vector<double> pair_distances(const EvalTile& tile, const EvalConfig& config, double cutoff,
                                   std::size_t* masked_pairs) {
  const std::size_t np = tile.preds.size();
  const std::size_t ng = tile.gts.size();
  std::vector<double> d(np * ng, std::numeric_limits<double>::infinity());
  const bool use_mask = config.mask_enabled && tile.mask != nullptr;

  std::vector<std::vector<Vec2>> pd(np);
  std::vector<std::vector<Vec2>> gd(ng);
  for (std::size_t i = 0; i < np; ++i) {
    require_polyline(tile.preds[i].points);
    pd[i] = densify(tile.preds[i].points, config.sample_step);
    if (use_mask) pd[i] = keep_dense(pd[i], *tile.mask);
  }
  for (std::size_t g = 0; g < ng; ++g) {
    require_polyline(tile.gts[g]);
    gd[g] = densify(tile.gts[g], config.sample_step);
    if (use_mask) gd[g] = keep_dense(gd[g], *tile.mask);
  }

  std::size_t masked = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : masked)
  for (std::size_t k = 0; k < np * ng; ++k) {
    const auto& a = pd[k / ng];
    const auto& b = gd[k % ng];
    if (a.empty() || b.empty()) {
      ++masked;
      continue;
    }
    if (chamfer_lower_bound(a, b) >= cutoff) continue;
    d[k] = 0.5 * (mean_nearest(a, b) + mean_nearest(b, a));
  }
  if (masked_pairs) *masked_pairs = masked;
  return d;
}

double average_precision(const std::vector<bool>& ranked_tp, std::size_t num_gt) {
  if (num_gt == 0 || ranked_tp.empty()) return 0.0;
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (ranked_tp[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  for (std::size_t k = n - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

double ap_at(std::span<const EvalTile> tiles, std::span<const std::vector<double>> distances, double tau,
             ThresholdCounts* counts, std::vector<MatchedPair>* matches, std::vector<ThresholdCounts>* per_tile) {
  struct Ranked {
    double score;
    std::size_t tile;
    std::size_t pred;
  };
  std::vector<Ranked> ranked;
  std::size_t num_gt = 0;
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    num_gt += tiles[t].gts.size();
    for (std::size_t i = 0; i < tiles[t].preds.size(); ++i) ranked.push_back({tiles[t].preds[i].score, t, i});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> taken(tiles.size());
  for (std::size_t t = 0; t < tiles.size(); ++t) taken[t].assign(tiles[t].gts.size(), false);
  if (per_tile) per_tile->assign(tiles.size(), {});

  std::vector<bool> is_tp(ranked.size(), false);
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto& [score, t, i] = ranked[k];
    const std::size_t ng = tiles[t].gts.size();
    std::size_t best = ng;
    double best_d = tau;
    for (std::size_t g = 0; g < ng; ++g) {
      const double d = distances[t][i * ng + g];
      if (!taken[t][g] && d < best_d) {
        best_d = d;
        best = g;
      }
    }
    if (best < ng) {
      taken[t][best] = true;
      is_tp[k] = true;
      if (matches) matches->push_back({tiles[t].tile_id, i, best, best_d});
    }
    if (per_tile) ++(is_tp[k] ? (*per_tile)[t].tp : (*per_tile)[t].fp);
  }

  if (per_tile) {
    for (std::size_t t = 0; t < tiles.size(); ++t) {
      (*per_tile)[t].fn = static_cast<std::size_t>(std::count(taken[t].begin(), taken[t].end(), false));
    }
  }
  if (counts) {
    counts->tp = static_cast<std::size_t>(std::count(is_tp.begin(), is_tp.end(), true));
    counts->fp = is_tp.size() - counts->tp;
    counts->fn = num_gt - counts->tp;
  }
  return average_precision(is_tp, num_gt);
}

EvalReport evaluate(std::span<const EvalTile> tiles, const EvalConfig& config) {
  config.validate();
  EvalReport report;
  report.thresholds = config.thresholds;
  report.masked = config.mask_enabled;
  const double cutoff = config.thresholds.back();

  std::vector<std::vector<double>> dist(tiles.size());
  report.per_tile.resize(tiles.size());
  bool any_score = false;
  double first_score = 0.0;
  bool all_equal = true;
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    std::size_t masked = 0;
    dist[t] = pair_distances(tiles[t], config, cutoff, &masked);
    report.per_tile[t].tile_id = tiles[t].tile_id;
    report.per_tile[t].num_preds = tiles[t].preds.size();
    report.per_tile[t].num_gts = tiles[t].gts.size();
    report.per_tile[t].masked_pairs = masked;
    for (const auto& p : tiles[t].preds) {
      if (!any_score) {
        first_score = p.score;
        any_score = true;
      } else if (p.score != first_score) {
        all_equal = false;
      }
    }
  }
  report.order_sensitive = any_score && all_equal;

  double sum = 0.0;
  for (double tau : config.thresholds) {
    ThresholdCounts c;
    std::vector<MatchedPair> m;
    std::vector<ThresholdCounts> pt;
    const double ap = ap_at(tiles, dist, tau, &c, &m, &pt);
    report.ap_per_threshold[tau] = ap;
    report.counts[tau] = c;
    report.matches[tau] = std::move(m);
    for (std::size_t t = 0; t < tiles.size(); ++t) report.per_tile[t].counts[tau] = pt[t];
    sum += ap;
  }
  report.ap_mean = sum / static_cast<double>(config.thresholds.size());
  return report;
}

json EvalReport::to_json() const {
  auto key = [](double tau) {
    std::ostringstream os;
    os << tau;
    return os.str();
  };
  json ap = json::object();
  json cnt = json::object();
  json pairs = json::object();
  for (double tau : thresholds) {
    ap[key(tau)] = ap_per_threshold.at(tau);
    const auto& c = counts.at(tau);
    cnt[key(tau)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    json arr = json::array();
    for (const auto& m : matches.at(tau)) {
      arr.push_back({{"tile_id", m.tile_id}, {"pred", m.pred}, {"gt", m.gt}, {"chamfer", m.chamfer}});
    }
    pairs[key(tau)] = arr;
  }
  json tiles_j = json::array();
  for (const auto& t : per_tile) {
    json c = json::object();
    for (const auto& [tau, tc] : t.counts) c[key(tau)] = {{"tp", tc.tp}, {"fp", tc.fp}, {"fn", tc.fn}};
    tiles_j.push_back({{"tile_id", t.tile_id},
                       {"num_preds", t.num_preds},
                       {"num_gts", t.num_gts},
                       {"masked_pairs", t.masked_pairs},
                       {"counts", c}});
  }
  return {{"version", 1},       {"thresholds", thresholds},          {"ap_per_threshold", ap},
          {"ap_mean", ap_mean}, {"counts", cnt},                     {"matched_pairs", pairs},
          {"masked", masked},   {"order_sensitive", order_sensitive}, {"per_tile", tiles_j}};
}

std::vector<EvalTile> align_eval_tiles(const std::map<std::string, std::vector<ScoredPolyline>>& preds,
                                       const std::map<std::string, std::vector<std::vector<Vec2>>>& gts,
                                       const std::map<std::string, GridTile>* masks) {
  std::vector<std::string> offenders;
  for (const auto& [id, _] : preds) {
    if (!gts.count(id)) offenders.push_back(id + " (no ground truth)");
    if (masks && !masks->count(id)) offenders.push_back(id + " (no tile)");
  }
  for (const auto& [id, _] : gts) {
    if (!preds.count(id)) offenders.push_back(id + " (no predictions)");
  }
  if (!offenders.empty()) {
    std::string msg = "misaligned tile ids:";
    for (const auto& o : offenders) msg += " " + o;
    throw ValidationError(msg);
  }
  std::vector<EvalTile> out;
  for (const auto& [id, p] : preds) {
    EvalTile t;
    t.tile_id = id;
    t.preds = p;
    t.gts = gts.at(id);
    if (masks) t.mask = &masks->at(id);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace trailmap
