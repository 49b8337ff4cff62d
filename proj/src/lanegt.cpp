#include "trailmap/lanegt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "trailmap/errors.hpp"

namespace trailmap {

using nlohmann::json;

void LaneGraph::validate() const {
  std::set<std::string> ids;
  for (const auto& s : segments) {
    if (s.points.size() < 2) throw ValidationError("lane segment '" + s.id + "' has fewer than 2 points");
    if (!ids.insert(s.id).second) throw ValidationError("duplicate lane segment id '" + s.id + "'");
  }
  for (const auto& [from, tos] : successors) {
    if (!ids.count(from)) throw ValidationError("successor list for unknown segment '" + from + "'");
    const auto& a = segments[index_of(from)];
    for (const auto& to : tos) {
      if (!ids.count(to)) throw ValidationError("segment '" + from + "' has dangling successor '" + to + "'");
      const auto& b = segments[index_of(to)];
      const double gap = distance(a.points.back(), b.points.front());
      if (gap > kConnectivityTolerance) {
        throw ValidationError("segments '" + from + "' and '" + to + "' are disconnected (gap " +
                              std::to_string(gap) + " m)");
      }
    }
  }
}

std::size_t LaneGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].id == id) return i;
  }
  throw ValidationError("unknown lane segment '" + id + "'");
}

std::size_t LaneGraph::adjacency_count() const {
  std::size_t n = 0;
  for (const auto& [from, tos] : successors) n += tos.size();
  return n;
}

json lane_graph_to_json(const LaneGraph& g) {
  json segs = json::array();
  for (const auto& s : g.segments) {
    json pts = json::array();
    for (const Vec2& p : s.points) pts.push_back({p.x, p.y});
    segs.push_back({{"id", s.id}, {"points", pts}});
  }
  json succ = json::object();
  for (const auto& [from, tos] : g.successors) succ[from] = tos;
  return {{"segments", segs}, {"successors", succ}};
}

LaneGraph lane_graph_from_json(const json& j) {
  LaneGraph g;
  try {
    for (const auto& s : j.at("segments")) {
      LaneSegment seg;
      seg.id = s.at("id").get<std::string>();
      for (const auto& p : s.at("points")) seg.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      g.segments.push_back(std::move(seg));
    }
    if (j.contains("successors")) {
      for (const auto& [from, tos] : j["successors"].items()) {
        g.successors[from] = tos.get<std::vector<std::string>>();
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("lane graph: ") + e.what());
  }
  g.validate();
  return g;
}

LaneGraph load_lane_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open lane graph " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return lane_graph_from_json(j);
}

void save_lane_graph(const std::filesystem::path& path, const LaneGraph& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << lane_graph_to_json(g).dump(2) << '\n';
}

LaneGraph to_tile_frame(const LaneGraph& g, const GridSpec& spec) {
  LaneGraph out = g;
  for (auto& s : out.segments) {
    for (Vec2& p : s.points) p = world_to_tile_m(spec, p);
  }
  return out;
}

LaneGraph clip_to_tile(const LaneGraph& g, const GridSpec& spec) {
  const Rect rect = tile_rect_m(spec);
  LaneGraph out;
  // For each original segment: ids of the pieces that carry its start / end.
  std::map<std::string, std::string> start_piece;
  std::map<std::string, std::string> end_piece;
  for (const auto& s : g.segments) {
    auto pieces = clip_polyline(s.points, rect);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      LaneSegment piece{pieces.size() == 1 ? s.id : s.id + "#" + std::to_string(k), std::move(pieces[k])};
      if (piece.points.front() == s.points.front()) start_piece[s.id] = piece.id;
      if (piece.points.back() == s.points.back()) end_piece[s.id] = piece.id;
      out.segments.push_back(std::move(piece));
    }
  }
  for (const auto& [from, tos] : g.successors) {
    auto e = end_piece.find(from);
    if (e == end_piece.end()) continue;
    for (const auto& to : tos) {
      auto st = start_piece.find(to);
      if (st != start_piece.end()) out.successors[e->second].push_back(st->second);
    }
  }
  return out;
}

double trail_support(const std::vector<Vec2>& polyline, const GridTile& tile, double yaw_tolerance,
                     double sample_step) {
  const auto cum = cumulative_length(polyline);
  const double total = cum.back();
  if (!(total > 0.0)) return 0.0;
  const auto samples = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(total / sample_step)));
  const double step = total / static_cast<double>(samples);
  const int w = tile.w();
  const int h = tile.h();
  const int n = tile.n();
  const double r = tile.spec.r;

  std::size_t supported = 0;
  std::size_t edge = 1;
  for (std::size_t k = 0; k < samples; ++k) {
    const double s = (static_cast<double>(k) + 0.5) * step;
    while (edge + 1 < polyline.size() && cum[edge] < s) ++edge;
    const Vec2 a = polyline[edge - 1];
    const Vec2 b = polyline[edge];
    const double seg_len = cum[edge] - cum[edge - 1];
    const Vec2 p = seg_len > 0.0 ? lerp(a, b, (s - cum[edge - 1]) / seg_len) : a;
    const int ix = static_cast<int>(std::floor(p.x / r));
    const int iy = static_cast<int>(std::floor(p.y / r));
    if (ix < 0 || iy < 0 || ix >= w || iy >= h) continue;
    const double yaw = heading(a, b);
    for (int j = 0; j < n; ++j) {
      if (tile.dir_at(ix, iy, j) > 0.0 && angle_diff(bin_center(j + 1, n), yaw) <= yaw_tolerance) {
        ++supported;
        break;
      }
    }
  }
  return static_cast<double>(supported) / static_cast<double>(samples);
}

LaneGraph filter_by_trails(const LaneGraph& g, const GridTile& tile, double cov_threshold, double yaw_tolerance,
                           double sample_step) {
  LaneGraph out;
  std::set<std::string> kept;
  for (const auto& s : g.segments) {
    if (trail_support(s.points, tile, yaw_tolerance, sample_step) >= cov_threshold) {
      out.segments.push_back(s);
      kept.insert(s.id);
    }
  }
  for (const auto& [from, tos] : g.successors) {
    if (!kept.count(from)) continue;
    std::vector<std::string> keep_to;
    for (const auto& to : tos) {
      if (kept.count(to)) keep_to.push_back(to);
    }
    if (!keep_to.empty()) out.successors[from] = std::move(keep_to);
  }
  return out;
}

std::vector<CenterlinePath> enumerate_paths(const LaneGraph& g, std::size_t max_paths) {
  const std::size_t n = g.segments.size();
  std::vector<std::vector<std::size_t>> next(n);
  std::vector<int> indegree(n, 0);
  for (const auto& [from, tos] : g.successors) {
    const std::size_t a = g.index_of(from);
    for (const auto& to : tos) {
      const std::size_t b = g.index_of(to);
      next[a].push_back(b);
      ++indegree[b];
    }
  }

  std::vector<std::vector<std::size_t>> routes;
  std::vector<bool> covered(n, false);
  std::vector<bool> on_path(n, false);
  std::vector<std::size_t> stack;
  std::function<void(std::size_t)> walk = [&](std::size_t v) {
    stack.push_back(v);
    on_path[v] = true;
    bool extended = false;
    for (std::size_t w : next[v]) {
      if (on_path[w]) continue;
      extended = true;
      walk(w);
    }
    if (!extended) {
      routes.push_back(stack);
      for (std::size_t u : stack) covered[u] = true;
    }
    on_path[v] = false;
    stack.pop_back();
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) walk(v);
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!covered[v]) walk(v);
  }

  std::vector<CenterlinePath> paths;
  paths.reserve(routes.size());
  for (const auto& route : routes) {
    CenterlinePath p;
    for (std::size_t v : route) {
      const auto& pts = g.segments[v].points;
      auto begin = pts.begin();
      if (!p.points.empty() && distance(p.points.back(), pts.front()) < 1e-9) ++begin;
      p.points.insert(p.points.end(), begin, pts.end());
      p.source_segments.push_back(g.segments[v].id);
    }
    paths.push_back(std::move(p));
  }

  if (paths.size() > max_paths) {
    std::vector<std::size_t> order(paths.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> len(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) len[i] = polyline_length(paths[i].points);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return len[a] > len[b]; });
    order.resize(max_paths);
    std::sort(order.begin(), order.end());
    std::vector<CenterlinePath> kept;
    for (std::size_t i : order) kept.push_back(std::move(paths[i]));
    paths = std::move(kept);
  }
  return paths;
}

CenterlinePath resample_path(const CenterlinePath& path, int m) {
  if (m < 2) throw DomainError("resample_path needs m >= 2");
  const auto cum = cumulative_length(path.points);
  if (path.points.size() < 2 || !(cum.back() > 0.0)) throw DomainError("cannot resample a zero-length path");
  const double total = cum.back();
  CenterlinePath out;
  out.source_segments = path.source_segments;
  out.points.reserve(static_cast<std::size_t>(m));
  out.points.push_back(path.points.front());
  for (int k = 1; k + 1 < m; ++k) {
    out.points.push_back(point_at_arclength(path.points, cum, total * k / (m - 1)));
  }
  out.points.push_back(path.points.back());
  return out;
}

std::vector<CenterlinePath> derive_ground_truth(const LaneGraph& global_graph, const GridTile& raw,
                                                const GtConfig& config) {
  const LaneGraph local = clip_to_tile(to_tile_frame(global_graph, raw.spec), raw.spec);
  const LaneGraph kept =
      filter_by_trails(local, raw, config.cov_threshold, config.yaw_tolerance, config.sample_step);
  std::vector<CenterlinePath> out;
  for (const auto& p : enumerate_paths(kept, config.max_paths)) {
    if (polyline_length(p.points) < config.min_path_length) continue;
    out.push_back(resample_path(p, config.m));
  }
  return out;
}

json gt_paths_to_json(const std::string& tile_id, const std::vector<CenterlinePath>& paths) {
  json arr = json::array();
  for (const auto& p : paths) {
    json pts = json::array();
    for (const Vec2& v : p.points) pts.push_back({v.x, v.y});
    arr.push_back({{"points", pts}, {"source_segments", p.source_segments}});
  }
  return {{"version", 1}, {"tile_id", tile_id}, {"frame", "tile_m"}, {"paths", arr}};
}

std::vector<CenterlinePath> gt_paths_from_json(const json& j) {
  std::vector<CenterlinePath> out;
  try {
    for (const auto& p : j.at("paths")) {
      CenterlinePath c;
      for (const auto& v : p.at("points")) c.points.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      c.source_segments = p.value("source_segments", std::vector<std::string>{});
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("ground-truth paths: ") + e.what());
  }
  return out;
}

}  // namespace trailmap
