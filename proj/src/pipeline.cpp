#include "trailmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "trailmap/errors.hpp"
#include "trailmap/export.hpp"
#include "trailmap/rng.hpp"
#include "trailmap/tile_archive.hpp"
#include "trailmap/training.hpp"

namespace trailmap {

using nlohmann::json;

namespace {

const std::map<std::string, std::string>& producers() {
  static const std::map<std::string, std::string> m = {
      {"synth", "trailmap synth"}, {"ingest", "trailmap ingest"}, {"tiles", "trailmap tiles"},
      {"raster", "trailmap raster"}, {"gt", "trailmap gt"},       {"train", "trailmap train"},
      {"infer", "trailmap infer"},   {"eval", "trailmap eval"},   {"export", "trailmap export"}};
  return m;
}

std::string producer_list(const std::vector<std::string>& stages) {
  std::string s;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) s += " or ";
    s += "`" + producers().at(stages[i]) + "`";
  }
  return s;
}

Manifest read_manifest_any(const fs::path& path, const std::vector<std::string>& stages) {
  const std::string who = producer_list(stages);
  std::ifstream in(path);
  if (!in) throw StageError("missing manifest " + path.string() + "; produce it with " + who);
  Manifest m{path, {}};
  try {
    m.body = json::parse(in);
  } catch (const json::exception& e) {
    throw StageError("unreadable manifest " + path.string() + " (" + e.what() + "); rerun " + who);
  }
  const std::string stage = m.body.value("stage", "");
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
    throw StageError(path.string() + " was written by stage '" + stage + "'; expected a manifest from " + who);
  }
  if (m.body.value("version", -1) != kManifestVersion) {
    throw StageError(path.string() + " has manifest version " + m.body.value("version", json(nullptr)).dump() +
                     ", this build reads version " + std::to_string(kManifestVersion) + "; rerun " + who);
  }
  return m;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path, const std::string& producer) {
  std::ifstream in(path);
  if (!in) throw StageError("missing " + path.string() + "; produce it with `" + producer + "`");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// `target` expressed relative to `base_dir`, so manifests do not depend on
// the working directory they were written from.
std::string relative_to(const fs::path& target, const fs::path& base_dir) {
  const fs::path t = fs::absolute(target).lexically_normal();
  const fs::path b = fs::absolute(base_dir).lexically_normal();
  return t.lexically_relative(b).generic_string();
}

fs::path write_manifest(const fs::path& out, json body, const std::string& stage, const PipelineConfig& config,
                        const std::vector<fs::path>& inputs) {
  body["stage"] = stage;
  body["version"] = kManifestVersion;
  body["provenance"] = provenance(config, stage, inputs, out);
  const fs::path path = out / "manifest.json";
  write_json(path, body);
  return path;
}

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

json points_json(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (const Vec2& p : pts) a.push_back({p.x, p.y});
  return a;
}

std::vector<Vec2> points_from_json(const json& a) {
  std::vector<Vec2> pts;
  for (const auto& p : a) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

// Runs body(i) for every i, in parallel, rethrowing the first failure in index order.
template <typename F>
void parallel_for_each(std::size_t count, F body) {
  std::vector<std::string> errors(count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::runtime_error(e);
  }
}

struct RasterEntry {
  std::string tile_id;
  std::string kind;
};

std::vector<RasterEntry> raster_entries(const Manifest& m) {
  std::vector<RasterEntry> out;
  for (const auto& t : m.body.at("tiles")) out.push_back({t.at("tile_id").get<std::string>(), t.at("kind").get<std::string>()});
  return out;
}

fs::path archive_dir(const Manifest& raster) { return raster.resolve(raster.body.at("archive").get<std::string>()); }

std::map<std::string, fs::path> file_table(const Manifest& m) {
  std::map<std::string, fs::path> out;
  for (const auto& t : m.body.at("tiles")) out[t.at("tile_id").get<std::string>()] = m.resolve(t.at("file").get<std::string>());
  return out;
}

std::vector<std::vector<Vec2>> load_gt_paths(const fs::path& file) {
  std::vector<std::vector<Vec2>> out;
  for (const auto& p : gt_paths_from_json(read_json(file, "trailmap gt"))) out.push_back(p.points);
  return out;
}

void check_raster_matches(const ArchivedTile& tile, int n, const std::string& what) {
  if (tile.spec.n != n) {
    throw StageError("tile " + tile.tile_id + " has " + std::to_string(tile.spec.n) + " direction bins but " + what +
                     " expects " + std::to_string(n) + "; rerun `trailmap raster`");
  }
}


}  // namespace

Manifest read_manifest(const fs::path& path, const std::string& stage) { return read_manifest_any(path, {stage}); }

json provenance(const PipelineConfig& config, const std::string& command, const std::vector<fs::path>& inputs,
                const fs::path& out) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", relative_to(p, out)}, {"fnv1a", file_hash(p.string())}});
  return {{"tool", "trailmap"},          {"command", command},   {"seed", config.seed},
          {"config_hash", config_hash(config)}, {"config", config.to_json()}, {"inputs", in}};
}

fs::path cmd_synth(const PipelineConfig& config, const fs::path& out, const LogFn& log) {
  config.validate();
  fs::create_directories(out);
  const SynthConfig& sc = config.synth;
  const double w = config.raster.w_glob;
  const double h = config.raster.h_glob;
  const std::uint64_t seed = stage_seed(config, SeedStream::kSynth);

  std::vector<Trail> trails;
  LaneGraph lanes;
  json scenes = json::array();
  std::size_t index = 0;
  for (Layout layout : sc.layouts) {
    for (int k = 0; k < sc.scenes_per_layout; ++k, ++index) {
      ScenarioSpec s;
      s.layout = layout;
      s.lanes_per_direction = sc.lanes_per_direction;
      s.one_way = sc.one_way;
      s.lane_width = sc.lane_width;
      s.trails_per_lane = sc.trails_per_lane;
      s.lateral_noise_sigma = sc.lateral_noise_sigma;
      s.speed_mean = sc.speed_mean;
      s.speed_std = sc.speed_std;
      s.junction_radius = sc.junction_radius;
      s.junction_slowdown = sc.junction_slowdown;
      s.margin = sc.margin;
      s.seed = derive_seed(seed, index);
      s.extent = std::min(w, h);
      // Scenes sit in every other tile of one row so each fills one fixed tile.
      const Vec2 origin{2.0 * static_cast<double>(index) * w, 0.0};
      s.center = {origin.x + 0.5 * w, origin.y + 0.5 * h};
      if (sc.heading_jitter > 0.0) {
        Rng rng(derive_seed(s.seed, 0x68656164));
        s.heading = rng.uniform(-sc.heading_jitter, sc.heading_jitter);
      }
      s.id_prefix = "s" + std::to_string(index) + "_";
      SynthScene scene = generate(s);
      trails.insert(trails.end(), scene.trails.begin(), scene.trails.end());
      lanes.segments.insert(lanes.segments.end(), scene.graph.segments.begin(), scene.graph.segments.end());
      for (const auto& [from, tos] : scene.graph.successors) lanes.successors[from] = tos;
      scenes.push_back({{"index", index},
                        {"layout", to_string(layout)},
                        {"seed", s.seed},
                        {"center", {s.center.x, s.center.y}},
                        {"heading", s.heading},
                        {"tile_origin", {origin.x, origin.y}},
                        {"trails", scene.trails.size()},
                        {"lane_segments", scene.graph.segments.size()}});
    }
  }
  lanes.validate();
  save_trails(out / "trails.jsonl", trails, FrameMetadata{"synthetic", std::nullopt, std::nullopt});
  save_lane_graph(out / "lanes.json", lanes);
  say(log, "synth: " + std::to_string(index) + " scenes, " + std::to_string(trails.size()) + " trails");
  json body = {{"trails", "trails.jsonl"}, {"lane_graph", "lanes.json"}, {"anchor", {0.0, 0.0}}, {"scenes", scenes}};
  return write_manifest(out, body, "synth", config, {});
}

fs::path cmd_ingest(const PipelineConfig& config, const fs::path& trails_path, const fs::path& out,
                    const LogFn& log) {
  config.validate();
  TrailFile tf = load_trails(trails_path);
  fs::create_directories(out);
  save_trails(out / "trails.jsonl", tf.trails, tf.frame);
  json rejected = json::array();
  for (const auto& r : tf.rejected) rejected.push_back({{"line", r.line}, {"trail_id", r.trail_id}, {"reason", r.reason}});
  write_json(out / "rejected.json", rejected);
  say(log, "ingest: " + std::to_string(tf.trails.size()) + " trails accepted, " + std::to_string(tf.rejected.size()) +
               " rejected");
  json body = {{"trails", "trails.jsonl"}, {"rejected", "rejected.json"}, {"accepted_count", tf.trails.size()},
               {"rejected_count", tf.rejected.size()}};
  std::vector<fs::path> inputs{trails_path};
  if (fs::exists(frame_sidecar_path(trails_path))) inputs.push_back(frame_sidecar_path(trails_path));
  return write_manifest(out, body, "ingest", config, inputs);
}

fs::path cmd_tiles(const PipelineConfig& config, const fs::path& trails_manifest, const fs::path& out,
                   const LogFn& log) {
  config.validate();
  const Manifest src = read_manifest_any(trails_manifest, {"ingest", "synth"});
  const fs::path trails_path = src.resolve(src.body.at("trails").get<std::string>());
  const TrailFile tf = load_trails(trails_path, TrailFormat::kJsonLines, true);

  std::optional<Vec2> anchor = config.tiling.anchor;
  if (!anchor && src.body.contains("anchor")) anchor = Vec2{src.body["anchor"][0].get<double>(), src.body["anchor"][1].get<double>()};
  const TileLayout layout = fixed_tiles(tf.trails, config.raster.spec_template(), anchor);

  auto ids_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> ids;
    for (std::size_t i : idx) ids.push_back(tf.trails[i].id);
    return ids;
  };
  json tiles = json::array();
  for (std::size_t i = 0; i < layout.tile_origins.size(); ++i) {
    const GridSpec spec = layout.spec(i);
    const auto idx = overlapping_trails(tf.trails, spec);
    tiles.push_back({{"tile_id", layout.tile_id(i)}, {"kind", "fixed"}, {"grid_spec", grid_spec_to_json(spec)},
                     {"trail_indices", idx}, {"trail_ids", ids_of(idx)}, {"augmentation", nullptr}});
  }
  std::size_t augmented = 0;
  if (config.tiling.augment) {
    for (const AugmentedTile& a : augmented_tiles(tf.trails, config.augmentation(), layout)) {
      tiles.push_back({{"tile_id", a.tile_id},
                       {"kind", "augmented"},
                       {"grid_spec", grid_spec_to_json(a.spec)},
                       {"trail_indices", a.trail_indices},
                       {"trail_ids", ids_of(a.trail_indices)},
                       {"augmentation",
                        {{"policy_seed", config.augmentation().seed},
                         {"sample_index", a.sample_index},
                         {"sample_seed", a.sample_seed},
                         {"parent_tile", layout.tile_id(a.parent_tile)},
                         {"rotation", a.spec.rotation},
                         {"keep_fraction", a.keep_fraction}}}});
      ++augmented;
    }
  }
  fs::create_directories(out);
  say(log, "tiles: " + std::to_string(layout.tile_origins.size()) + " fixed, " + std::to_string(augmented) +
               " augmented");
  json body = {{"trails", relative_to(trails_path, out)},
               {"grid_origin", {layout.grid_origin.x, layout.grid_origin.y}},
               {"covered_bbox",
                {layout.covered_bbox.min_x, layout.covered_bbox.min_y, layout.covered_bbox.max_x,
                 layout.covered_bbox.max_y}},
               {"tiles", tiles}};
  if (src.body.contains("lane_graph")) {
    body["lane_graph"] = relative_to(src.resolve(src.body["lane_graph"].get<std::string>()), out);
  }
  return write_manifest(out, body, "tiles", config, {trails_manifest});
}

fs::path cmd_raster(const PipelineConfig& config, const fs::path& tiles_manifest, const fs::path& out,
                    const LogFn& log) {
  config.validate();
  const Manifest src = read_manifest(tiles_manifest, "tiles");
  const TrailFile tf = load_trails(src.resolve(src.body.at("trails").get<std::string>()), TrailFormat::kJsonLines, true);
  const json& tiles = src.body.at("tiles");
  const fs::path archive = out / "archive";
  fs::create_directories(archive);
  const json prov = provenance(config, "raster", {tiles_manifest}, out);

  parallel_for_each(tiles.size(), [&](std::size_t i) {
    const json& t = tiles[i];
    ArchivedTile at;
    at.tile_id = t.at("tile_id").get<std::string>();
    at.kind = t.at("kind").get<std::string>();
    at.spec = grid_spec_from_json(t.at("grid_spec"));
    if (at.spec.n != config.raster.n || at.spec.r != config.raster.r) {
      throw StageError("tile " + at.tile_id + " was laid out with a different grid; rerun `trailmap tiles`");
    }
    at.trail_ids = t.at("trail_ids").get<std::vector<std::string>>();
    at.augmentation = t.at("augmentation");
    std::vector<Trail> subset;
    for (auto idx : t.at("trail_indices").get<std::vector<std::size_t>>()) subset.push_back(tf.trails.at(idx));
    const GridTile raw = rasterize(at.spec, subset);
    const GridTile smooth = gaussian_smooth(raw, config.raster.sigma);
    at.sigma = config.raster.sigma;
    at.raw = raw.to_tensor();
    at.grid = smooth.to_tensor();
    write_archived_tile(archive, at, prov);
  });

  json entries = json::array();
  for (const auto& t : tiles) {
    entries.push_back({{"tile_id", t.at("tile_id")}, {"kind", t.at("kind")},
                       {"meta", "archive/" + t.at("tile_id").get<std::string>() + ".json"}});
  }
  say(log, "raster: " + std::to_string(tiles.size()) + " tiles");
  json body = {{"archive", "archive"}, {"tiles", entries}};
  if (src.body.contains("lane_graph")) {
    body["lane_graph"] = relative_to(src.resolve(src.body["lane_graph"].get<std::string>()), out);
  }
  return write_manifest(out, body, "raster", config, {tiles_manifest});
}

fs::path cmd_gt(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& lanes,
                const fs::path& out, const LogFn& log) {
  config.validate();
  const Manifest src = read_manifest(raster_manifest, "raster");
  fs::path lanes_path = lanes;
  if (lanes_path.empty()) {
    if (!src.body.contains("lane_graph")) {
      throw StageError("no lane graph given and the trail source recorded none; pass --lanes");
    }
    lanes_path = src.resolve(src.body["lane_graph"].get<std::string>());
  }
  const LaneGraph graph = load_lane_graph(lanes_path);
  const auto entries = raster_entries(src);
  const fs::path dir = archive_dir(src);
  fs::create_directories(out);
  const json prov = provenance(config, "gt", {raster_manifest, lanes_path}, out);

  std::vector<std::size_t> counts(entries.size());
  parallel_for_each(entries.size(), [&](std::size_t i) {
    const ArchivedTile at = read_archived_tile(dir, entries[i].tile_id);
    const auto paths = derive_ground_truth(graph, at.raw_tile(), config.gt);
    counts[i] = paths.size();
    json j = gt_paths_to_json(at.tile_id, paths);
    j["grid_spec"] = grid_spec_to_json(at.spec);
    j["provenance"] = prov;
    write_json(out / (at.tile_id + ".gt.json"), j);
  });

  json tiles = json::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    tiles.push_back({{"tile_id", entries[i].tile_id}, {"file", entries[i].tile_id + ".gt.json"}, {"paths", counts[i]}});
    total += counts[i];
  }
  say(log, "gt: " + std::to_string(total) + " paths over " + std::to_string(entries.size()) + " tiles");
  return write_manifest(out, {{"tiles", tiles}}, "gt", config, {raster_manifest, lanes_path});
}

fs::path cmd_train(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& gt_manifest,
                   const fs::path& out, const LogFn& log) {
  config.validate();
  const Manifest raster = read_manifest(raster_manifest, "raster");
  const Manifest gt = read_manifest(gt_manifest, "gt");
  const auto gt_files = file_table(gt);
  const fs::path dir = archive_dir(raster);
  const RasterConfig& rc = config.raster;

  std::vector<TrainSample> samples;
  for (const auto& e : raster_entries(raster)) {
    if (e.kind != "fixed" && !(e.kind == "augmented" && config.train.use_augmented)) continue;
    const ArchivedTile at = read_archived_tile(dir, e.tile_id);
    check_raster_matches(at, rc.n, "the config");
    const auto it = gt_files.find(e.tile_id);
    if (it == gt_files.end()) throw StageError("no ground truth for tile " + e.tile_id + "; rerun `trailmap gt`");
    TrainSample s;
    s.tile_id = e.tile_id;
    s.input = normalize_tensor(at.grid, at.spec.n, rc.v_max, rc.include_speed);
    for (const auto& p : load_gt_paths(it->second)) s.targets.push_back(normalize_path(p, at.spec));
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw StageError("no training tiles in " + raster_manifest.string());

  const TrainConfig& tc = config.train;
  const ModelConfig mc = config.effective_model();
  say(log, "train: " + std::to_string(samples.size()) + " tiles, " +
               std::to_string(Model::initialize(mc).parameter_count()) + " parameters, " + std::to_string(tc.steps) +
               " steps");
  const TrainResult result =
      train_model(mc, samples, tc, stage_seed(config, SeedStream::kBatch), [&](const TrainLogEntry& e) {
        std::ostringstream ss;
        ss << "step " << e.step << " loss " << e.loss.total << " (one2one " << e.loss.one2one << ", one2many "
           << e.loss.one2many << ", score " << e.loss.score << ", dir " << e.loss.dir << ")";
        say(log, ss.str());
      });
  const Model& model = result.model;
  const LossBreakdown& last = result.last;
  json log_entries = json::array();
  for (const auto& e : result.log) {
    log_entries.push_back({{"step", e.step},
                           {"lr_scale", e.lr_scale},
                           {"total", e.loss.total},
                           {"one2one", e.loss.one2one},
                           {"one2many", e.loss.one2many},
                           {"score", e.loss.score},
                           {"dir", e.loss.dir},
                           {"matched", e.loss.matched}});
  }

  fs::create_directories(out);
  const json prov = provenance(config, "train", {raster_manifest, gt_manifest}, out);
  const json extra = {{"input", {{"n", rc.n}, {"include_speed", rc.include_speed}, {"v_max", rc.v_max}}},
                      {"steps", tc.steps},
                      {"final_loss", last.total},
                      {"provenance", prov}};
  save_checkpoint(out / "checkpoint.bin", model, extra);
  write_json(out / "train_log.json", {{"entries", log_entries}, {"provenance", prov}});
  json body = {{"checkpoint", "checkpoint.bin"}, {"log", "train_log.json"}, {"samples", samples.size()},
               {"final_loss", last.total}};
  return write_manifest(out, body, "train", config, {raster_manifest, gt_manifest});
}

fs::path cmd_infer(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& checkpoint,
                   const fs::path& out, const LogFn& log) {
  config.validate();
  const Manifest raster = read_manifest(raster_manifest, "raster");
  json extra;
  const Model model = load_checkpoint(checkpoint, &extra);
  if (!extra.contains("input")) throw StageError(checkpoint.string() + " lacks input metadata; retrain with `trailmap train`");
  const int n = extra["input"].at("n").get<int>();
  const bool include_speed = extra["input"].at("include_speed").get<bool>();
  const double v_max = extra["input"].at("v_max").get<double>();
  const fs::path dir = archive_dir(raster);
  fs::create_directories(out);
  const json prov = provenance(config, "infer", {raster_manifest, checkpoint}, out);

  std::vector<RasterEntry> entries;
  for (const auto& e : raster_entries(raster)) {
    if (e.kind == "fixed") entries.push_back(e);
  }
  std::vector<std::size_t> counts(entries.size());
  parallel_for_each(entries.size(), [&](std::size_t i) {
    const ArchivedTile at = read_archived_tile(dir, entries[i].tile_id);
    check_raster_matches(at, n, "the checkpoint");
    const PredictionSet ps = forward(model, normalize_tensor(at.grid, n, v_max, include_speed));
    json preds = json::array();
    for (std::size_t q = 0; q < ps.polylines.size(); ++q) {
      const double score = ps.scores ? (*ps.scores)[q] : 1.0;
      if (ps.scores && score < config.infer.score_threshold) continue;
      const auto tile_m = denormalize_path(ps.polylines[q], at.spec);
      std::vector<Vec2> world;
      for (const Vec2& p : tile_m) world.push_back(tile_m_to_world(at.spec, p));
      preds.push_back({{"query", q}, {"score", score}, {"points", points_json(tile_m)}, {"world", points_json(world)}});
    }
    counts[i] = preds.size();
    write_json(out / (at.tile_id + ".pred.json"), {{"tile_id", at.tile_id},
                                                    {"frame", "tile_m"},
                                                    {"grid_spec", grid_spec_to_json(at.spec)},
                                                    {"score_head", ps.scores.has_value()},
                                                    {"predictions", preds},
                                                    {"provenance", prov}});
  });
  json tiles = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    tiles.push_back({{"tile_id", entries[i].tile_id}, {"file", entries[i].tile_id + ".pred.json"}, {"predictions", counts[i]}});
  }
  say(log, "infer: " + std::to_string(entries.size()) + " tiles");
  return write_manifest(out, {{"tiles", tiles}}, "infer", config, {raster_manifest, checkpoint});
}

fs::path cmd_eval(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& pred_manifest,
                  const fs::path& gt_manifest, const fs::path& out, const LogFn& log) {
  config.validate();
  const Manifest raster = read_manifest(raster_manifest, "raster");
  const Manifest pred = read_manifest(pred_manifest, "infer");
  const Manifest gt = read_manifest(gt_manifest, "gt");
  const fs::path dir = archive_dir(raster);
  const auto gt_files = file_table(gt);

  std::map<std::string, std::vector<ScoredPolyline>> preds;
  for (const auto& [id, file] : file_table(pred)) {
    auto& v = preds[id];
    const json body = read_json(file, "trailmap infer");
    for (const auto& p : body.at("predictions")) {
      v.push_back({points_from_json(p.at("points")), p.at("score").get<double>()});
    }
  }
  std::map<std::string, std::vector<std::vector<Vec2>>> gts;
  std::map<std::string, GridTile> masks;
  for (const auto& e : raster_entries(raster)) {
    if (e.kind != "fixed") continue;
    const auto it = gt_files.find(e.tile_id);
    if (it != gt_files.end()) gts[e.tile_id] = load_gt_paths(it->second);
    if (config.eval.mask_enabled) masks[e.tile_id] = read_archived_tile(dir, e.tile_id).raw_tile();
  }
  const auto tiles = align_eval_tiles(preds, gts, config.eval.mask_enabled ? &masks : nullptr);
  const EvalReport report = evaluate(tiles, config.eval);

  fs::create_directories(out);
  json j = report.to_json();
  j["provenance"] = provenance(config, "eval", {raster_manifest, pred_manifest, gt_manifest}, out);
  write_json(out / "report.json", j);
  std::ostringstream ss;
  ss << "eval: mean AP " << report.ap_mean;
  for (const auto& [tau, ap] : report.ap_per_threshold) ss << ", AP@" << tau << " " << ap;
  say(log, ss.str());
  return write_manifest(out, {{"report", "report.json"}, {"ap_mean", report.ap_mean}}, "eval", config,
                        {raster_manifest, pred_manifest, gt_manifest});
}

fs::path cmd_export(const PipelineConfig& config, const fs::path& raster_manifest, const fs::path& pred_manifest,
                    const fs::path& gt_manifest, const fs::path& out, const LogFn& log) {
  config.validate();
  const Manifest raster = read_manifest(raster_manifest, "raster");
  std::vector<fs::path> inputs{raster_manifest};
  std::map<std::string, fs::path> pred_files;
  std::map<std::string, fs::path> gt_files;
  if (!pred_manifest.empty()) {
    pred_files = file_table(read_manifest(pred_manifest, "infer"));
    inputs.push_back(pred_manifest);
  }
  if (!gt_manifest.empty()) {
    gt_files = file_table(read_manifest(gt_manifest, "gt"));
    inputs.push_back(gt_manifest);
  }
  const fs::path dir = archive_dir(raster);
  fs::create_directories(out);
  const json prov = provenance(config, "export", inputs, out);

  std::vector<RasterEntry> entries;
  for (const auto& e : raster_entries(raster)) {
    if (e.kind == "fixed") entries.push_back(e);
  }
  parallel_for_each(entries.size(), [&](std::size_t i) {
    const ArchivedTile at = read_archived_tile(dir, entries[i].tile_id);
    const int c = at.spec.n + 1;
    const auto images = write_channel_pngs(out, at.tile_id, at.grid, at.spec.w_grid(), at.spec.h_grid(), c);
    json channels = json::array();
    for (int k = 0; k < c; ++k) {
      channels.push_back({{"channel", k < at.spec.n ? "dir_" + std::to_string(k + 1) : std::string("speed")},
                          {"file", images[k].file},
                          {"min", images[k].min},
                          {"max", images[k].max}});
    }
    write_json(out / (at.tile_id + ".png.json"),
               {{"tile_id", at.tile_id},
                {"scaling", "8-bit, value = min + (max - min) * pixel / 255"},
                {"orientation", "columns follow +u, rows run from high v (top) to low v (bottom)"},
                {"channels", channels},
                {"provenance", prov}});

    std::vector<ExportLine> lines;
    if (const auto it = pred_files.find(at.tile_id); it != pred_files.end()) {
      std::size_t k = 0;
      const json body = read_json(it->second, "trailmap infer");
      for (const auto& p : body.at("predictions")) {
        lines.push_back({points_from_json(p.at("world")),
                         {{"tile_id", at.tile_id}, {"kind", "prediction"}, {"index", k++}, {"score", p.at("score")}}});
      }
    }
    if (const auto it = gt_files.find(at.tile_id); it != gt_files.end()) {
      std::size_t k = 0;
      for (const auto& path : load_gt_paths(it->second)) {
        std::vector<Vec2> world;
        for (const Vec2& p : path) world.push_back(tile_m_to_world(at.spec, p));
        lines.push_back({world, {{"tile_id", at.tile_id}, {"kind", "ground_truth"}, {"index", k++}}});
      }
    }
    json fc = feature_collection(lines);
    fc["provenance"] = prov;
    write_json(out / (at.tile_id + ".geojson"), fc);
  });
  json tiles = json::array();
  for (const auto& e : entries) {
    tiles.push_back({{"tile_id", e.tile_id}, {"geojson", e.tile_id + ".geojson"}, {"images", e.tile_id + ".png.json"}});
  }
  say(log, "export: " + std::to_string(entries.size()) + " tiles");
  return write_manifest(out, {{"tiles", tiles}}, "export", config, inputs);
}

fs::path cmd_run(const PipelineConfig& config, const fs::path& out, const LogFn& log) {
  const fs::path synth = cmd_synth(config, out / "synth", log);
  const fs::path tiles = cmd_tiles(config, synth, out / "tiles", log);
  const fs::path raster = cmd_raster(config, tiles, out / "raster", log);
  const fs::path gt = cmd_gt(config, raster, {}, out / "gt", log);
  const fs::path train = cmd_train(config, raster, gt, out / "train", log);
  const fs::path infer = cmd_infer(config, raster, out / "train" / "checkpoint.bin", out / "infer", log);
  const fs::path eval = cmd_eval(config, raster, infer, gt, out / "eval", log);
  cmd_export(config, raster, infer, gt, out / "export", log);
  return eval;
}

}  // namespace trailmap
