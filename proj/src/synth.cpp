#include "trailmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "trailmap/errors.hpp"
#include "trailmap/rng.hpp"

namespace trailmap {

std::string to_string(Layout l) {
  switch (l) {
    case Layout::kStraight: return "straight";
    case Layout::kCurve: return "curve";
    case Layout::kTJunction: return "t_junction";
    case Layout::kCrossroads: return "crossroads";
  }
  return "?";
}

Layout layout_from_string(const std::string& s) {
  if (s == "straight") return Layout::kStraight;
  if (s == "curve") return Layout::kCurve;
  if (s == "t_junction") return Layout::kTJunction;
  if (s == "crossroads") return Layout::kCrossroads;
  throw ParseError("unknown layout '" + s + "'");
}

void ScenarioSpec::validate() const {
  if (lanes_per_direction < 1 || trails_per_lane < 1) throw ValidationError("scenario counts must be >= 1");
  if (!(lateral_noise_sigma >= 0.0)) throw ValidationError("lateral noise sigma must be >= 0");
  if (!(lane_width > 0.0) || !(pose_spacing > 0.0) || !(vehicle_width > 0.0)) {
    throw ValidationError("scenario lengths must be > 0");
  }
  if (!(speed_mean > 0.0) || !(speed_std >= 0.0)) throw ValidationError("invalid speed profile");
  if (!(extent > 2.0 * margin)) throw ValidationError("scenario extent too small for its margin");
  if (one_way && layout != Layout::kStraight && layout != Layout::kCurve) {
    throw ValidationError("one-way scenes need the straight or curve layout");
  }
}

namespace {

// Right-hand normal of a direction.
Vec2 right_of(Vec2 d) { return {d.y, -d.x}; }

std::vector<Vec2> straight_line(Vec2 a, Vec2 b, double spacing) {
  const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(distance(a, b) / spacing)));
  std::vector<Vec2> pts;
  for (std::size_t k = 0; k <= pieces; ++k) pts.push_back(lerp(a, b, static_cast<double>(k) / pieces));
  return pts;
}

// Quadratic Bezier from p0 to p2, tangent to d0 at p0 and d2 at p2.
std::vector<Vec2> connector(Vec2 p0, Vec2 d0, Vec2 p2, Vec2 d2) {
  const double denom = cross(d0, d2);
  Vec2 ctrl;
  if (std::abs(denom) < 1e-9) {
    ctrl = lerp(p0, p2, 0.5);
  } else {
    const double t = cross(p2 - p0, d2) / denom;
    ctrl = p0 + d0 * t;
  }
  const auto pieces = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(distance(p0, p2))));
  std::vector<Vec2> pts;
  for (std::size_t k = 0; k <= pieces; ++k) {
    const double t = static_cast<double>(k) / pieces;
    pts.push_back(p0 * ((1 - t) * (1 - t)) + ctrl * (2 * (1 - t) * t) + p2 * (t * t));
  }
  return pts;
}

struct Builder {
  LaneGraph graph;
  std::vector<std::vector<std::string>> routes;
  std::vector<Vec2> junctions;

  void add(const std::string& id, std::vector<Vec2> pts) { graph.segments.push_back({id, std::move(pts)}); }
  void link(const std::string& a, const std::string& b) { graph.successors[a].push_back(b); }
};

// Lane running along a reference polyline, split into two chained segments.
void chained_lane(Builder& b, const std::string& id, const std::vector<Vec2>& pts) {
  const std::size_t mid = pts.size() / 2;
  b.add(id + "_a", std::vector<Vec2>(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(mid) + 1));
  b.add(id + "_b", std::vector<Vec2>(pts.begin() + static_cast<std::ptrdiff_t>(mid), pts.end()));
  b.link(id + "_a", id + "_b");
  b.routes.push_back({id + "_a", id + "_b"});
}

void build_straight(Builder& b, const ScenarioSpec& s, double reach) {
  for (int i = 0; i < s.lanes_per_direction; ++i) {
    const double off = (i + 0.5) * s.lane_width;
    chained_lane(b, "fwd" + std::to_string(i), straight_line({-reach, -off}, {reach, -off}, s.pose_spacing));
    if (!s.one_way) chained_lane(b, "bwd" + std::to_string(i), straight_line({reach, off}, {-reach, off}, s.pose_spacing));
  }
}

void build_curve(Builder& b, const ScenarioSpec& s, double reach) {
  // Left-hand bend from the south-west toward the north, centered on the
  // north-west corner of the scene.
  const Vec2 c{-reach, reach};
  const double rho = 1.6 * reach;
  auto arc = [&](double radius, bool forward) {
    const double len = radius * std::numbers::pi / 2.0;
    const auto pieces = std::max<std::size_t>(8, static_cast<std::size_t>(std::ceil(len / s.pose_spacing)));
    std::vector<Vec2> pts;
    for (std::size_t k = 0; k <= pieces; ++k) {
      const double t = static_cast<double>(k) / pieces;
      const double th = -std::numbers::pi / 2.0 + (forward ? t : 1.0 - t) * std::numbers::pi / 2.0;
      pts.push_back(c + Vec2{radius * std::cos(th), radius * std::sin(th)});
    }
    return pts;
  };
  for (int i = 0; i < s.lanes_per_direction; ++i) {
    const double off = (i + 0.5) * s.lane_width;
    chained_lane(b, "fwd" + std::to_string(i), arc(rho + off, true));
    if (!s.one_way) chained_lane(b, "bwd" + std::to_string(i), arc(rho - off, false));
  }
}

void build_junction(Builder& b, const ScenarioSpec& s, double reach, const std::vector<Vec2>& arms) {
  const double half = s.lanes_per_direction * s.lane_width + 1.0;
  b.junctions.push_back({0.0, 0.0});
  const std::vector<std::string> names{"e", "n", "w", "s"};
  auto arm_name = [&](Vec2 d) {
    const double a = std::atan2(d.y, d.x);
    const int q = static_cast<int>(std::lround(a / (std::numbers::pi / 2.0)) + 4) % 4;
    return names[static_cast<std::size_t>(q)];
  };
  for (const Vec2& d : arms) {
    const Vec2 right = right_of(d);
    for (int i = 0; i < s.lanes_per_direction; ++i) {
      const double off = (i + 0.5) * s.lane_width;
      const std::string an = arm_name(d);
      // Outgoing lanes drive along d and sit on its right.
      b.add(an + "_out" + std::to_string(i), straight_line(d * half + right * off, d * reach + right * off, s.pose_spacing));
      // Incoming lanes drive along -d and sit on the right of -d.
      b.add(an + "_in" + std::to_string(i), straight_line(d * reach - right * off, d * half - right * off, s.pose_spacing));
    }
  }
  for (const Vec2& da : arms) {
    for (const Vec2& db : arms) {
      if (da == db) continue;
      for (int i = 0; i < s.lanes_per_direction; ++i) {
        const std::string in = arm_name(da) + "_in" + std::to_string(i);
        const std::string out = arm_name(db) + "_out" + std::to_string(i);
        const std::string id = in + "_to_" + out;
        const auto& pin = b.graph.segments[b.graph.index_of(in)].points;
        const auto& pout = b.graph.segments[b.graph.index_of(out)].points;
        b.add(id, connector(pin.back(), da * -1.0, pout.front(), db));
        b.link(in, id);
        b.link(id, out);
        b.routes.push_back({in, id, out});
      }
    }
  }
}

}  // namespace

std::vector<Vec2> route_polyline(const LaneGraph& g, const std::vector<std::string>& route) {
  std::vector<Vec2> pts;
  for (const auto& id : route) {
    const auto& seg = g.segments[g.index_of(id)].points;
    auto begin = seg.begin();
    if (!pts.empty() && distance(pts.back(), seg.front()) < 1e-9) ++begin;
    pts.insert(pts.end(), begin, seg.end());
  }
  return pts;
}

SynthScene generate(const ScenarioSpec& spec) {
  spec.validate();
  const double reach = spec.extent / 2.0 - spec.margin;
  Builder b;
  switch (spec.layout) {
    case Layout::kStraight: build_straight(b, spec, reach); break;
    case Layout::kCurve: build_curve(b, spec, reach); break;
    case Layout::kTJunction: build_junction(b, spec, reach, {{1, 0}, {-1, 0}, {0, -1}}); break;
    case Layout::kCrossroads: build_junction(b, spec, reach, {{1, 0}, {0, 1}, {-1, 0}, {0, -1}}); break;
  }

  // Local scene frame -> global frame.
  auto place = [&](Vec2 p) { return rotate(p, spec.heading) + spec.center; };
  SynthScene scene;
  for (auto& seg : b.graph.segments) {
    for (Vec2& p : seg.points) p = place(p);
    seg.id = spec.id_prefix + seg.id;
  }
  for (const auto& [from, tos] : b.graph.successors) {
    auto& dst = scene.graph.successors[spec.id_prefix + from];
    for (const auto& to : tos) dst.push_back(spec.id_prefix + to);
  }
  scene.graph.segments = std::move(b.graph.segments);
  for (auto& route : b.routes) {
    for (auto& id : route) id = spec.id_prefix + id;
  }
  scene.routes = std::move(b.routes);
  std::vector<Vec2> junctions;
  for (const Vec2& j : b.junctions) junctions.push_back(place(j));

  Rng rng(spec.seed);
  std::size_t trail_no = 0;
  for (std::size_t r = 0; r < scene.routes.size(); ++r) {
    const auto poly = route_polyline(scene.graph, scene.routes[r]);
    const auto cum = cumulative_length(poly);
    const double total = cum.back();
    for (int k = 0; k < spec.trails_per_lane; ++k) {
      Trail t;
      t.id = spec.id_prefix + "trail" + std::to_string(trail_no++);
      t.source = trail_no % 3 == 1 ? TrailSource::kEgo : TrailSource::kObject;
      t.width_m = std::clamp(rng.normal(spec.vehicle_width, 0.1), 1.4, 2.4);
      const double offset = rng.normal(0.0, spec.lateral_noise_sigma);
      const double base_speed = std::max(1.0, rng.normal(spec.speed_mean, spec.speed_std));
      double s = rng.uniform(0.0, spec.pose_spacing);
      double time = 0.0;
      std::size_t edge = 1;
      while (s <= total) {
        while (edge + 1 < poly.size() && cum[edge] < s) ++edge;
        const Vec2 dir = poly[edge] - poly[edge - 1];
        const Vec2 normal = right_of(dir) * (1.0 / norm(dir));
        const double wobble = spec.lateral_noise_sigma > 0.0 ? rng.normal(0.0, 0.2 * spec.lateral_noise_sigma) : 0.0;
        const Vec2 p = point_at_arclength(poly, cum, s) + normal * (offset + wobble);
        double v = base_speed;
        for (const Vec2& jc : junctions) {
          if (distance(p, jc) < spec.junction_radius) v *= spec.junction_slowdown;
        }
        if (!t.poses.empty()) {
          const Pose& last = t.poses.back();
          time += distance(last.xy(), p) / (last.speed ? *last.speed : v);
          if (p.x == last.x && p.y == last.y) {
            s += spec.pose_spacing;
            continue;
          }
        }
        t.poses.push_back({p.x, p.y, time, v});
        const double jitter = spec.lateral_noise_sigma > 0.0 ? rng.uniform(-0.2, 0.2) : 0.0;
        s += spec.pose_spacing * (1.0 + jitter);
      }
      if (t.poses.size() >= 2) {
        scene.trails.push_back(std::move(t));
        scene.trail_route.push_back(r);
      }
    }
  }
  return scene;
}

}  // namespace trailmap
