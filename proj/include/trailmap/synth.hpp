#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trailmap/lanegt.hpp"
#include "trailmap/trails.hpp"

namespace trailmap {

enum class Layout { kStraight, kCurve, kTJunction, kCrossroads };

std::string to_string(Layout l);
Layout layout_from_string(const std::string& s);

struct ScenarioSpec {
  Layout layout = Layout::kCrossroads;
  int lanes_per_direction = 1;
  bool one_way = false;  // forward lanes only; straight and curve layouts
  double lane_width = 3.5;
  int trails_per_lane = 10;  // trails per drivable route
  double lateral_noise_sigma = 0.3;
  double speed_mean = 10.0;
  double speed_std = 2.0;
  std::uint64_t seed = 0;

  // Placement: the scene fills a square of side `extent` (minus `margin` on
  // each side) centered at `center`, rotated by `heading`.
  double extent = 60.0;
  double margin = 2.0;
  Vec2 center{30.0, 30.0};
  double heading = 0.0;

  double pose_spacing = 1.0;      // meters between consecutive poses
  double vehicle_width = 1.8;
  double junction_radius = 10.0;  // speed reduction zone around junction centers
  double junction_slowdown = 0.5;
  std::string id_prefix;

  void validate() const;
};

struct SynthScene {
  LaneGraph graph;
  std::vector<Trail> trails;
  // Route index of each trail; routes[r] lists the lane segment ids.
  std::vector<std::size_t> trail_route;
  std::vector<std::vector<std::string>> routes;
};

SynthScene generate(const ScenarioSpec& spec);

// Polyline of a route (concatenated lane segments).
std::vector<Vec2> route_polyline(const LaneGraph& g, const std::vector<std::string>& route);

}  // namespace trailmap
