#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "trailmap/errors.hpp"
#include "trailmap/raster.hpp"
#include "trailmap/synth.hpp"

using namespace trailmap;

namespace {

double dist_to_polyline(Vec2 p, const std::vector<Vec2>& line) {
  double best = 1e300;
  for (std::size_t i = 1; i < line.size(); ++i) best = std::min(best, point_segment_dist2(p, line[i - 1], line[i]));
  return std::sqrt(best);
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("noise-free straight trails lie on their centerline") {
    ScenarioSpec s;
    s.layout = Layout::kStraight;
    s.lanes_per_direction = 1;
    s.trails_per_lane = 1;
    s.lateral_noise_sigma = 0.0;
    s.seed = 1;
    const SynthScene scene = generate(s);
    REQUIRE(!scene.trails.empty());
    for (std::size_t t = 0; t < scene.trails.size(); ++t) {
      const auto line = route_polyline(scene.graph, scene.routes[scene.trail_route[t]]);
      for (const Pose& p : scene.trails[t].poses) CHECK(dist_to_polyline(p.xy(), line) < 1e-9);
    }
  }

  TEST_CASE("generation is deterministic per seed") {
    ScenarioSpec s;
    s.seed = 17;
    const SynthScene a = generate(s);
    const SynthScene b = generate(s);
    REQUIRE(a.trails.size() == b.trails.size());
    for (std::size_t i = 0; i < a.trails.size(); ++i) CHECK(format_trail_record(a.trails[i]) == format_trail_record(b.trails[i]));
    CHECK(lane_graph_to_json(a.graph) == lane_graph_to_json(b.graph));
    s.seed = 18;
    CHECK(format_trail_record(generate(s).trails[0]) != format_trail_record(a.trails[0]));
  }

  TEST_CASE("every layout yields a valid graph and valid trails") {
    for (Layout l : {Layout::kStraight, Layout::kCurve, Layout::kTJunction, Layout::kCrossroads}) {
      for (int lanes : {1, 2}) {
        ScenarioSpec s;
        s.layout = l;
        s.lanes_per_direction = lanes;
        s.seed = 3;
        s.heading = 0.4;
        const SynthScene scene = generate(s);
        CHECK_NOTHROW(scene.graph.validate());
        CHECK(scene.trails.size() == scene.routes.size() * 10);
        for (const Trail& t : scene.trails) CHECK_NOTHROW(validate_trail(t));
        CHECK(layout_from_string(to_string(l)) == l);
      }
    }
    CHECK_THROWS_AS(layout_from_string("roundabout"), ParseError);
  }

  TEST_CASE("one-way scenes drop the reverse lanes") {
    for (Layout l : {Layout::kStraight, Layout::kCurve}) {
      ScenarioSpec s;
      s.layout = l;
      s.seed = 4;
      const std::size_t two_way = generate(s).graph.segments.size();
      s.one_way = true;
      const SynthScene scene = generate(s);
      CHECK(scene.graph.segments.size() * 2 == two_way);
      for (const auto& seg : scene.graph.segments) CHECK(seg.id.rfind("fwd", 0) == 0);
    }

    // A noise-free one-way straight road fills exactly one direction channel.
    ScenarioSpec s;
    s.layout = Layout::kStraight;
    s.lateral_noise_sigma = 0.0;
    s.heading = 0.3;
    s.seed = 4;
    GridSpec spec;
    spec.r = 0.5;
    auto channels = [&](const ScenarioSpec& sc) {
      const GridTile tile = rasterize(spec, generate(sc).trails);
      std::set<int> used;
      for (std::size_t c = 0; c < spec.cells(); ++c)
        for (int j = 0; j < spec.n; ++j)
          if (tile.dir[c * static_cast<std::size_t>(spec.n) + j] > 0) used.insert(j);
      return used.size();
    };
    CHECK(channels(s) == 2);
    s.one_way = true;
    CHECK(channels(s) == 1);

    s.layout = Layout::kCrossroads;
    CHECK_THROWS_AS(generate(s), ValidationError);
  }

  TEST_CASE("crossroads fill at least four direction channels") {
    ScenarioSpec s;
    s.layout = Layout::kCrossroads;
    s.seed = 2;
    GridSpec spec;
    spec.r = 0.5;
    spec.n = 6;
    const GridTile tile = rasterize(spec, generate(s).trails);
    std::set<int> used;
    for (std::size_t c = 0; c < spec.cells(); ++c)
      for (int j = 0; j < 6; ++j)
        if (tile.dir[c * 6 + j] > 0) used.insert(j);
    CHECK(used.size() >= 4);
  }

  TEST_CASE("trails stay within the scene square") {
    ScenarioSpec s;
    s.layout = Layout::kTJunction;
    s.center = {100, -50};
    s.extent = 50;
    s.seed = 5;
    for (const Trail& t : generate(s).trails) {
      for (const Pose& p : t.poses) {
        CHECK(std::abs(p.x - 100) <= 25 + 2);
        CHECK(std::abs(p.y + 50) <= 25 + 2);
      }
    }
  }

  TEST_CASE("junction traffic slows down") {
    ScenarioSpec s;
    s.layout = Layout::kCrossroads;
    s.seed = 6;
    s.speed_std = 0.0;
    s.lateral_noise_sigma = 0.0;
    double near_sum = 0, far_sum = 0;
    int near_n = 0, far_n = 0;
    for (const Trail& t : generate(s).trails) {
      for (const auto& seg : segments(t)) {
        const double d = distance(seg.a.xy(), s.center);
        if (d < 5) near_sum += seg.speed, ++near_n;
        if (d > 20) far_sum += seg.speed, ++far_n;
      }
    }
    REQUIRE(near_n > 0);
    REQUIRE(far_n > 0);
    CHECK(near_sum / near_n < far_sum / far_n);
  }

  TEST_CASE("scenario validation") {
    ScenarioSpec s;
    s.trails_per_lane = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = ScenarioSpec{};
    s.extent = 3;
    CHECK_THROWS_AS(generate(s), ValidationError);
  }
}
