#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trailmap/config.hpp"
#include "trailmap/errors.hpp"
#include "trailmap/pipeline.hpp"

using namespace trailmap;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--config", c.config, "pipeline config JSON (unknown keys are rejected)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

PipelineConfig load_config(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : PipelineConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trailmap: lane-centerline map tiles from vehicle trails"};
  app.require_subcommand(1);
  Common common;
  std::string trails;
  std::string tiles;
  std::string lanes;
  std::string gt;
  std::string pred;
  std::string checkpoint;
  std::optional<bool> mask;
  std::optional<bool> score_head;

  auto* synth = app.add_subcommand("synth", "generate synthetic scenes (trails + lane graph)");
  add_common(synth, common);

  auto* ingest = app.add_subcommand("ingest", "validate a trail file and write its canonical form");
  add_common(ingest, common);
  ingest->add_option("trails", trails, "trail file (one JSON record per line)")->required()->check(CLI::ExistingFile);

  auto* tiles_cmd = app.add_subcommand("tiles", "lay out fixed and augmented tiles");
  add_common(tiles_cmd, common);
  tiles_cmd->add_option("--trails", trails, "manifest written by ingest or synth")->required();

  auto* raster = app.add_subcommand("raster", "rasterize every tile into the tile archive");
  add_common(raster, common);
  raster->add_option("--tiles", tiles, "manifest written by tiles")->required();

  auto* gt_cmd = app.add_subcommand("gt", "derive per-tile ground-truth centerline paths");
  add_common(gt_cmd, common);
  gt_cmd->add_option("--tiles", tiles, "manifest written by raster")->required();
  gt_cmd->add_option("--lanes", lanes, "lane graph JSON (defaults to the one recorded by synth)");

  auto* train = app.add_subcommand("train", "train the set-prediction model");
  add_common(train, common);
  train->add_option("--tiles", tiles, "manifest written by raster")->required();
  train->add_option("--gt", gt, "manifest written by gt")->required();
  train->add_flag("--score-head,!--no-score-head", score_head, "enable the matchedness score head");

  auto* infer = app.add_subcommand("infer", "predict centerlines for every fixed tile");
  add_common(infer, common);
  infer->add_option("--tiles", tiles, "manifest written by raster")->required();
  infer->add_option("--checkpoint", checkpoint, "checkpoint written by train")->required();

  auto* eval = app.add_subcommand("eval", "Chamfer AP of predictions against ground truth");
  add_common(eval, common);
  eval->add_option("--tiles", tiles, "manifest written by raster")->required();
  eval->add_option("--pred", pred, "manifest written by infer")->required();
  eval->add_option("--gt", gt, "manifest written by gt")->required();
  eval->add_flag("--mask,!--no-mask", mask, "restrict Chamfer samples to cells with trail density");

  auto* exp = app.add_subcommand("export", "PNG channel heatmaps and GeoJSON centerlines");
  add_common(exp, common);
  exp->add_option("--tiles", tiles, "manifest written by raster")->required();
  exp->add_option("--pred", pred, "manifest written by infer");
  exp->add_option("--gt", gt, "manifest written by gt");

  auto* run = app.add_subcommand("run", "synth through export in subdirectories of --out");
  add_common(run, common);
  run->add_flag("--score-head,!--no-score-head", score_head, "enable the matchedness score head");
  run->add_flag("--mask,!--no-mask", mask, "restrict Chamfer samples to cells with trail density");

  auto* show = app.add_subcommand("config", "print the effective config as JSON");
  add_common(show, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    PipelineConfig cfg = load_config(common);
    if (mask) cfg.eval.mask_enabled = *mask;
    if (score_head) cfg.model.score_head = *score_head;
    const fs::path out = common.out;
    if (cmd == synth) {
      cmd_synth(cfg, out, log_line);
    } else if (cmd == ingest) {
      cmd_ingest(cfg, trails, out, log_line);
    } else if (cmd == tiles_cmd) {
      cmd_tiles(cfg, trails, out, log_line);
    } else if (cmd == raster) {
      cmd_raster(cfg, tiles, out, log_line);
    } else if (cmd == gt_cmd) {
      cmd_gt(cfg, tiles, lanes, out, log_line);
    } else if (cmd == train) {
      cmd_train(cfg, tiles, gt, out, log_line);
    } else if (cmd == infer) {
      cmd_infer(cfg, tiles, checkpoint, out, log_line);
    } else if (cmd == eval) {
      cmd_eval(cfg, tiles, pred, gt, out, log_line);
    } else if (cmd == exp) {
      cmd_export(cfg, tiles, pred, gt, out, log_line);
    } else if (cmd == run) {
      cmd_run(cfg, out, log_line);
    } else if (cmd == show) {
      std::cout << cfg.to_json().dump(2) << '\n';
    }
  } catch (const StageError& e) {
    std::cerr << "trailmap " << cmd->get_name() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "trailmap " << cmd->get_name() << ": error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
