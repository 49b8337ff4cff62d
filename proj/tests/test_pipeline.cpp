#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "trailmap/config.hpp"
#include "trailmap/errors.hpp"
#include "trailmap/export.hpp"
#include "trailmap/pipeline.hpp"

using namespace trailmap;
using nlohmann::json;

namespace {

PipelineConfig tiny_config() {
  return PipelineConfig::from_json(json::parse(R"({
    "seed": 3,
    "raster": {"r": 2.0, "sigma": 1.0},
    "tiling": {"samples_per_tile": 2},
    "synth": {"layouts": ["straight", "crossroads"], "scenes_per_layout": 1, "trails_per_lane": 3},
    "model": {"queries": 4, "d_model": 8, "ffn_dim": 8, "heads": 2, "feature_stride": 4, "base_channels": 4,
              "aux_queries": 2, "aux_copies": 2, "decoder_layers": 1},
    "train": {"steps": 3, "batch_size": 2, "warmup_steps": 1, "log_every": 1}
  })"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Relative path -> contents for every file below `root`.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config rejects unknown keys with their path") {
    try {
      PipelineConfig::from_json(json::parse(R"({"raster": {"sigmaa": 1}})"));
      FAIL("expected an unknown-key error");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("raster.sigmaa") != std::string::npos);
    }
    CHECK_THROWS(PipelineConfig::from_json(json::parse(R"({"raster": {"r": 0.7}})")));
  }

  TEST_CASE("config json round trip and hash") {
    const PipelineConfig c = tiny_config();
    const PipelineConfig back = PipelineConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(config_hash(back) == config_hash(c));
    PipelineConfig d = c;
    d.seed = 4;
    CHECK(config_hash(d) != config_hash(c));
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }

  TEST_CASE("stages refuse artifacts from the wrong producer") {
    testutil::TempDir dir("stage");
    const PipelineConfig c = tiny_config();
    const fs::path synth = cmd_synth(c, dir.path / "synth");
    try {
      cmd_raster(c, synth, dir.path / "raster");
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(std::string(e.what()).find("trailmap tiles") != std::string::npos);
    }
    CHECK_THROWS_AS(cmd_tiles(c, dir.path / "nowhere" / "manifest.json", dir.path / "tiles"), StageError);

    json m = json::parse(slurp(synth));
    m["version"] = 99;
    std::ofstream(dir.path / "skew.json") << m.dump();
    CHECK_THROWS_AS(read_manifest(dir.path / "skew.json", "synth"), StageError);
  }

  TEST_CASE("empty prediction sets export as empty feature collections") {
    const json fc = feature_collection(std::span<const ExportLine>{});
    CHECK(fc.at("type") == "FeatureCollection");
    CHECK(fc.at("features").empty());

    testutil::TempDir dir("export");
    PipelineConfig c = tiny_config();
    c.infer.score_threshold = 2.0;  // no prediction can pass
    const fs::path synth = cmd_synth(c, dir.path / "synth");
    const fs::path tiles = cmd_tiles(c, synth, dir.path / "tiles");
    const fs::path raster = cmd_raster(c, tiles, dir.path / "raster");
    const fs::path gt = cmd_gt(c, raster, {}, dir.path / "gt");
    const fs::path model = cmd_train(c, raster, gt, dir.path / "train");
    const json tm = json::parse(slurp(model));
    const fs::path ckpt = dir.path / "train" / tm.at("checkpoint").get<std::string>();
    const fs::path pred = cmd_infer(c, raster, ckpt, dir.path / "infer");
    const fs::path exp = cmd_export(c, raster, pred, {}, dir.path / "export");
    const json em = json::parse(slurp(exp));
    REQUIRE(!em.at("tiles").empty());
    for (const auto& t : em.at("tiles")) {
      const json g = json::parse(slurp(dir.path / "export" / t.at("geojson").get<std::string>()));
      CHECK(g.at("type") == "FeatureCollection");
      CHECK(g.at("features").empty());
    }
  }

  TEST_CASE("eval and export see every prediction infer wrote") {
    testutil::TempDir dir("counts");
    PipelineConfig c = tiny_config();
    c.infer.score_threshold = 0.0;
    cmd_run(c, dir.path);
    std::map<std::string, std::size_t> written;
    const json im = json::parse(slurp(dir.path / "infer" / "manifest.json"));
    for (const auto& t : im.at("tiles"))
      written[t.at("tile_id").get<std::string>()] = t.at("predictions").get<std::size_t>();
    REQUIRE(!written.empty());

    const json report = json::parse(slurp(dir.path / "eval" / "report.json"));
    std::size_t seen = 0;
    for (const auto& t : report.at("per_tile")) {
      CHECK(t.at("num_preds").get<std::size_t>() == written.at(t.at("tile_id").get<std::string>()));
      CHECK(t.at("num_preds").get<std::size_t>() == static_cast<std::size_t>(c.model.queries));
      ++seen;
    }
    CHECK(seen == written.size());

    const json em = json::parse(slurp(dir.path / "export" / "manifest.json"));
    for (const auto& t : em.at("tiles")) {
      const json g = json::parse(slurp(dir.path / "export" / t.at("geojson").get<std::string>()));
      std::size_t preds = 0;
      for (const auto& f : g.at("features")) preds += f.at("properties").at("kind") == "prediction";
      CHECK(preds == written.at(t.at("tile_id").get<std::string>()));
    }
  }

  TEST_CASE("repeated runs with one seed are byte-identical") {
    testutil::TempDir a("run_a");
    testutil::TempDir b("run_b");
    const PipelineConfig c = tiny_config();
    const fs::path ra = cmd_run(c, a.path);
    cmd_run(c, b.path);
    const auto sa = snapshot(a.path);
    const auto sb = snapshot(b.path);
    CHECK(sa.size() > 10);
    CHECK(sa == sb);
    const json report = json::parse(slurp(ra.parent_path() / "report.json"));
    CHECK(report.at("ap_mean").get<double>() >= 0.0);
  }
}
