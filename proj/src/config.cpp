#include "trailmap/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "trailmap/errors.hpp"
#include "trailmap/rng.hpp"

namespace trailmap {

using nlohmann::json;

namespace {

// Reads fields of one config section and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config key '" + where(key) + "': " + e.what());
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), where(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    std::string unknown;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) unknown += (unknown.empty() ? "" : ", ") + where(k);
    }
    if (!unknown.empty()) throw ValidationError("unknown config key(s): " + unknown);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

GridSpec RasterConfig::spec_template() const {
  GridSpec s;
  s.w_glob = w_glob;
  s.h_glob = h_glob;
  s.r = r;
  s.n = n;
  return s;
}

void PipelineConfig::validate() const {
  raster.spec_template().validate();
  if (raster.sigma < 0.0) throw ValidationError("raster.sigma must be >= 0");
  if (!(raster.v_max > 0.0)) throw ValidationError("raster.v_max must be > 0");
  augmentation().validate();
  if (tiling.samples_per_tile < 0.0) throw ValidationError("tiling.samples_per_tile must be >= 0");
  if (gt.m < 2) throw ValidationError("gt.m must be >= 2");
  if (!(gt.cov_threshold >= 0.0 && gt.cov_threshold <= 1.0)) throw ValidationError("gt.cov_threshold must be in [0, 1]");
  if (!(gt.sample_step > 0.0)) throw ValidationError("gt.sample_step must be > 0");
  effective_model().validate();
  if (train.steps < 0 || train.batch_size < 1 || train.warmup_steps < 0) {
    throw ValidationError("train.steps >= 0, train.batch_size >= 1 and train.warmup_steps >= 0 required");
  }
  if (!(train.optimizer.lr > 0.0)) throw ValidationError("train.lr must be > 0");
  eval.validate();
  if (synth.layouts.empty() || synth.scenes_per_layout < 1) {
    throw ValidationError("synth needs at least one layout and scenes_per_layout >= 1");
  }
  if (synth.lanes_per_direction < 1 || synth.trails_per_lane < 1 || synth.lateral_noise_sigma < 0.0) {
    throw ValidationError("synth counts must be >= 1 and lateral_noise_sigma >= 0");
  }
}

json PipelineConfig::to_json() const {
  json layouts = json::array();
  for (Layout l : synth.layouts) layouts.push_back(to_string(l));
  return {
      {"seed", seed},
      {"raster",
       {{"w_glob", raster.w_glob},
        {"h_glob", raster.h_glob},
        {"r", raster.r},
        {"n", raster.n},
        {"sigma", raster.sigma},
        {"v_max", raster.v_max},
        {"include_speed", raster.include_speed}}},
      {"tiling",
       {{"augment", tiling.augment},
        {"rotation_min", tiling.rotation_min},
        {"rotation_max", tiling.rotation_max},
        {"keep_min", tiling.keep_min},
        {"keep_max", tiling.keep_max},
        {"samples_per_tile", tiling.samples_per_tile},
        {"anchor", tiling.anchor ? json::array({tiling.anchor->x, tiling.anchor->y}) : json(nullptr)}}},
      {"gt",
       {{"cov_threshold", gt.cov_threshold},
        {"yaw_tolerance", gt.yaw_tolerance},
        {"m", gt.m},
        {"max_paths", gt.max_paths},
        {"sample_step", gt.sample_step},
        {"min_path_length", gt.min_path_length}}},
      {"model",
       {{"queries", model.queries},
        {"d_model", model.d_model},
        {"decoder_layers", model.decoder_layers},
        {"heads", model.heads},
        {"feature_stride", model.feature_stride},
        {"score_head", model.score_head},
        {"base_channels", model.base_channels},
        {"ffn_dim", model.ffn_dim},
        {"aux_queries", model.aux_queries},
        {"aux_copies", model.aux_copies}}},
      {"train",
       {{"steps", train.steps},
        {"batch_size", train.batch_size},
        {"warmup_steps", train.warmup_steps},
        {"min_lr_scale", train.min_lr_scale},
        {"use_augmented", train.use_augmented},
        {"log_every", train.log_every},
        {"lr", train.optimizer.lr},
        {"beta1", train.optimizer.beta1},
        {"beta2", train.optimizer.beta2},
        {"eps", train.optimizer.eps},
        {"grad_clip", train.optimizer.grad_clip},
        {"loss_weights", train.loss.to_json()}}},
      {"infer", {{"score_threshold", infer.score_threshold}}},
      {"eval", {{"thresholds", eval.thresholds}, {"sample_step", eval.sample_step}, {"mask", eval.mask_enabled}}},
      {"synth",
       {{"layouts", layouts},
        {"scenes_per_layout", synth.scenes_per_layout},
        {"lanes_per_direction", synth.lanes_per_direction},
        {"one_way", synth.one_way},
        {"lane_width", synth.lane_width},
        {"trails_per_lane", synth.trails_per_lane},
        {"lateral_noise_sigma", synth.lateral_noise_sigma},
        {"speed_mean", synth.speed_mean},
        {"speed_std", synth.speed_std},
        {"junction_radius", synth.junction_radius},
        {"junction_slowdown", synth.junction_slowdown},
        {"margin", synth.margin},
        {"heading_jitter", synth.heading_jitter}}},
  };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  if (auto s = root.sub("raster")) {
    s->get("w_glob", c.raster.w_glob);
    s->get("h_glob", c.raster.h_glob);
    s->get("r", c.raster.r);
    s->get("n", c.raster.n);
    s->get("sigma", c.raster.sigma);
    s->get("v_max", c.raster.v_max);
    s->get("include_speed", c.raster.include_speed);
    s->finish();
  }
  if (auto s = root.sub("tiling")) {
    s->get("augment", c.tiling.augment);
    s->get("rotation_min", c.tiling.rotation_min);
    s->get("rotation_max", c.tiling.rotation_max);
    s->get("keep_min", c.tiling.keep_min);
    s->get("keep_max", c.tiling.keep_max);
    s->get("samples_per_tile", c.tiling.samples_per_tile);
    if (const json* a = s->raw("anchor"); a && !a->is_null()) {
      if (!a->is_array() || a->size() != 2) throw ValidationError("config key 'tiling.anchor' must be [x, y] or null");
      c.tiling.anchor = Vec2{(*a)[0].get<double>(), (*a)[1].get<double>()};
    }
    s->finish();
  }
  if (auto s = root.sub("gt")) {
    s->get("cov_threshold", c.gt.cov_threshold);
    s->get("yaw_tolerance", c.gt.yaw_tolerance);
    s->get("m", c.gt.m);
    s->get("max_paths", c.gt.max_paths);
    s->get("sample_step", c.gt.sample_step);
    s->get("min_path_length", c.gt.min_path_length);
    s->finish();
  }
  if (auto s = root.sub("model")) {
    s->get("queries", c.model.queries);
    s->get("d_model", c.model.d_model);
    s->get("decoder_layers", c.model.decoder_layers);
    s->get("heads", c.model.heads);
    s->get("feature_stride", c.model.feature_stride);
    s->get("score_head", c.model.score_head);
    s->get("base_channels", c.model.base_channels);
    s->get("ffn_dim", c.model.ffn_dim);
    s->get("aux_queries", c.model.aux_queries);
    s->get("aux_copies", c.model.aux_copies);
    s->finish();
  }
  if (auto s = root.sub("train")) {
    s->get("steps", c.train.steps);
    s->get("batch_size", c.train.batch_size);
    s->get("warmup_steps", c.train.warmup_steps);
    s->get("min_lr_scale", c.train.min_lr_scale);
    s->get("use_augmented", c.train.use_augmented);
    s->get("log_every", c.train.log_every);
    s->get("lr", c.train.optimizer.lr);
    s->get("beta1", c.train.optimizer.beta1);
    s->get("beta2", c.train.optimizer.beta2);
    s->get("eps", c.train.optimizer.eps);
    s->get("grad_clip", c.train.optimizer.grad_clip);
    if (auto w = s->sub("loss_weights")) {
      w->get("one2one", c.train.loss.one2one);
      w->get("one2many", c.train.loss.one2many);
      w->get("score", c.train.loss.score);
      w->get("dir", c.train.loss.dir);
      w->finish();
    }
    s->finish();
  }
  if (auto s = root.sub("infer")) {
    s->get("score_threshold", c.infer.score_threshold);
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    s->get("thresholds", c.eval.thresholds);
    s->get("sample_step", c.eval.sample_step);
    s->get("mask", c.eval.mask_enabled);
    s->finish();
  }
  if (auto s = root.sub("synth")) {
    std::vector<std::string> layouts;
    s->get("layouts", layouts);
    if (!layouts.empty()) {
      c.synth.layouts.clear();
      for (const auto& l : layouts) c.synth.layouts.push_back(layout_from_string(l));
    }
    s->get("scenes_per_layout", c.synth.scenes_per_layout);
    s->get("lanes_per_direction", c.synth.lanes_per_direction);
    s->get("one_way", c.synth.one_way);
    s->get("lane_width", c.synth.lane_width);
    s->get("trails_per_lane", c.synth.trails_per_lane);
    s->get("lateral_noise_sigma", c.synth.lateral_noise_sigma);
    s->get("speed_mean", c.synth.speed_mean);
    s->get("speed_std", c.synth.speed_std);
    s->get("junction_radius", c.synth.junction_radius);
    s->get("junction_slowdown", c.synth.junction_slowdown);
    s->get("margin", c.synth.margin);
    s->get("heading_jitter", c.synth.heading_jitter);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return from_json(j);
}

ModelConfig PipelineConfig::effective_model() const {
  ModelConfig m = model;
  const GridSpec s = raster.spec_template();
  m.in_channels = raster.model_channels();
  m.grid_w = s.w_grid();
  m.grid_h = s.h_grid();
  m.points = gt.m;
  m.init_seed = stage_seed(*this, SeedStream::kInit);
  return m;
}

AugmentationPolicy PipelineConfig::augmentation() const {
  AugmentationPolicy p;
  p.seed = stage_seed(*this, SeedStream::kAugment);
  p.rotation_min = tiling.rotation_min;
  p.rotation_max = tiling.rotation_max;
  p.keep_min = tiling.keep_min;
  p.keep_max = tiling.keep_max;
  p.samples_per_km2 = tiling.samples_per_tile / (raster.w_glob * raster.h_glob * 1e-6);
  return p;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::string config_hash(const PipelineConfig& config) { return fnv1a_hex(config.to_json().dump()); }

std::uint64_t stage_seed(const PipelineConfig& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

}  // namespace trailmap
