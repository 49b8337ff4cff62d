#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "trailmap/geometry.hpp"
#include "trailmap/rng.hpp"
#include "trailmap/trails.hpp"

namespace testutil {

using trailmap::Pose;
using trailmap::Rng;
using trailmap::Trail;
using trailmap::Vec2;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("trailmap_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline Trail make_trail(const std::string& id, std::vector<Vec2> pts, double width = 1.8, double speed_mps = 10.0) {
  Trail t;
  t.id = id;
  t.width_m = width;
  double time = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i > 0) time += trailmap::distance(pts[i - 1], pts[i]) / speed_mps;
    t.poses.push_back({pts[i].x, pts[i].y, time, std::nullopt});
  }
  return t;
}

// Random walk with bounded turning, starting inside [lo, hi]^2.
inline Trail random_trail(Rng& rng, const std::string& id, double lo, double hi, int poses = 8) {
  std::vector<Vec2> pts;
  Vec2 p{rng.uniform(lo, hi), rng.uniform(lo, hi)};
  double yaw = rng.uniform(-M_PI, M_PI);
  for (int i = 0; i < poses; ++i) {
    pts.push_back(p);
    yaw += rng.uniform(-0.5, 0.5);
    const double step = rng.uniform(0.5, 4.0);
    p = p + Vec2{std::cos(yaw), std::sin(yaw)} * step;
  }
  return make_trail(id, pts, rng.uniform(0.8, 3.0), rng.uniform(2.0, 20.0));
}

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace testutil
