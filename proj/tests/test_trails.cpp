#include <doctest.h>

#include <fstream>
#include <numbers>

#include "helpers.hpp"
#include "trailmap/errors.hpp"
#include "trailmap/synth.hpp"
#include "trailmap/trails.hpp"

using namespace trailmap;
using testutil::TempDir;

namespace {

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_SUITE("trails") {
  TEST_CASE("two-pose record loads as one trail") {
    TempDir dir("trails_min");
    const auto path = dir.path / "t.jsonl";
    write_lines(path, {R"({"id":"a","source":"ego","width_m":1.8,"points":[{"x":0,"y":0,"t":0},{"x":1,"y":0,"t":1}]})"});
    const TrailFile f = load_trails(path);
    REQUIRE(f.trails.size() == 1);
    CHECK(f.trails[0].poses.size() == 2);
    CHECK(f.trails[0].width_m == 1.8);
    CHECK(f.rejected.empty());
  }

  TEST_CASE("repeated identical positions are rejected") {
    TempDir dir("trails_dup");
    const auto path = dir.path / "t.jsonl";
    write_lines(path, {R"({"id":"dup","source":"object","width_m":2,"points":[{"x":1,"y":1,"t":0},{"x":1,"y":1,"t":1}]})",
                       R"({"id":"ok","source":"ego","width_m":2,"points":[{"x":0,"y":0,"t":0},{"x":0,"y":2,"t":1}]})"});
    const TrailFile f = load_trails(path);
    REQUIRE(f.trails.size() == 1);
    CHECK(f.trails[0].id == "ok");
    REQUIRE(f.rejected.size() == 1);
    CHECK(f.rejected[0].trail_id == "dup");
    CHECK(f.rejected[0].line == 1);
    CHECK_THROWS_AS(load_trails(path, TrailFormat::kJsonLines, true), ValidationError);
  }

  TEST_CASE("malformed record reports its line number") {
    TempDir dir("trails_bad");
    const auto path = dir.path / "t.jsonl";
    write_lines(path, {R"({"id":"a","source":"ego","width_m":1,"points":[{"x":0,"y":0,"t":0},{"x":1,"y":0,"t":1}]})",
                       R"({"id":"b","source":"ego","width_m":1,"points":[{"x":0,"y":0})"});
    try {
      load_trails(path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  TEST_CASE("non-monotonic timestamps name the trail") {
    Trail t = testutil::make_trail("late", {{0, 0}, {1, 0}, {2, 0}});
    t.poses[2].t = t.poses[1].t;
    try {
      validate_trail(t);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("late") != std::string::npos);
    }
  }

  TEST_CASE("invalid widths and short trails are rejected") {
    Trail t = testutil::make_trail("w", {{0, 0}, {1, 0}});
    t.width_m = 0.0;
    CHECK_THROWS_AS(validate_trail(t), ValidationError);
    Trail s = testutil::make_trail("s", {{0, 0}, {1, 0}});
    s.poses.pop_back();
    CHECK_THROWS_AS(validate_trail(s), ValidationError);
    Trail v = testutil::make_trail("v", {{0, 0}, {1, 0}});
    v.poses[0].speed = -1.0;
    CHECK_THROWS_AS(validate_trail(v), ValidationError);
  }

  TEST_CASE("synthetic trails survive a save/load round trip") {
    ScenarioSpec spec;
    spec.layout = Layout::kCrossroads;
    spec.trails_per_lane = 84;  // 12 routes
    spec.seed = 5;
    SynthScene scene = generate(spec);
    REQUIRE(scene.trails.size() >= 1000);
    scene.trails.resize(1000);
    TempDir dir("trails_rt");
    const auto path = dir.path / "synth.jsonl";
    save_trails(path, scene.trails, FrameMetadata{"enu", 48.1, 11.5});
    const TrailFile f = load_trails(path, TrailFormat::kJsonLines, true);
    REQUIRE(f.trails.size() == 1000);
    CHECK(f.rejected.empty());
    CHECK(f.frame.frame_id == "enu");
    CHECK(f.frame.origin_lat == doctest::Approx(48.1));
    for (std::size_t i = 0; i < f.trails.size(); ++i) {
      CHECK_NOTHROW(validate_trail(f.trails[i]));
      REQUIRE(f.trails[i].poses.size() == scene.trails[i].poses.size());
      CHECK(f.trails[i].poses.back().x == scene.trails[i].poses.back().x);
    }
  }

  TEST_CASE("segment yaw and derived speed") {
    const auto seg = [](Vec2 a, Vec2 b, double tb) {
      Trail t;
      t.id = "s";
      t.width_m = 1.0;
      t.poses = {{a.x, a.y, 0.0, std::nullopt}, {b.x, b.y, tb, std::nullopt}};
      return segments(t).at(0);
    };
    CHECK(seg({0, 0}, {1, 0}, 1).yaw == 0.0);
    CHECK(seg({0, 0}, {0, 1}, 1).yaw == doctest::Approx(std::numbers::pi / 2));
    CHECK(seg({0, 0}, {3, 4}, 1).speed == doctest::Approx(5.0));
    // Heading straight along -x is +pi, never -pi.
    CHECK(seg({0, 0}, {-1, 0}, 1).yaw == std::numbers::pi);
    CHECK(seg({0, 0}, {-1, -0.0}, 1).yaw == std::numbers::pi);
  }

  TEST_CASE("given pose speed takes precedence") {
    Trail t = testutil::make_trail("p", {{0, 0}, {10, 0}, {20, 0}});
    t.poses[0].speed = 3.5;
    const auto segs = segments(t);
    CHECK(segs[0].speed == 3.5);
    CHECK(segs[1].speed == doctest::Approx(10.0));
  }

  TEST_CASE("segment count is p - 1 and yaw stays in (-pi, pi]") {
    Rng rng(11);
    for (int k = 0; k < 50; ++k) {
      const Trail t = testutil::random_trail(rng, "r", -50, 50, 2 + static_cast<int>(rng.below(20)));
      const auto segs = segments(t);
      CHECK(segs.size() == t.poses.size() - 1);
      for (const auto& s : segs) {
        CHECK(s.yaw > -std::numbers::pi);
        CHECK(s.yaw <= std::numbers::pi);
      }
    }
  }

  TEST_CASE("yaw is rotation covariant, derived speed rigid-motion invariant") {
    Rng rng(12);
    for (double theta : {std::numbers::pi / 2, std::numbers::pi, -std::numbers::pi / 2}) {
      for (int k = 0; k < 20; ++k) {
        const Trail t = testutil::random_trail(rng, "r", -30, 30, 10);
        Trail rt = t;
        const Vec2 shift{rng.uniform(-100, 100), rng.uniform(-100, 100)};
        for (auto& p : rt.poses) {
          const Vec2 q = rotate(p.xy(), theta) + shift;
          p.x = q.x;
          p.y = q.y;
        }
        const auto a = segments(t);
        const auto b = segments(rt);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
          CHECK(angle_diff(b[i].yaw, wrap_angle(a[i].yaw + theta)) < 1e-9);
          CHECK(b[i].speed == doctest::Approx(a[i].speed).epsilon(1e-9));
        }
      }
    }
  }
}
