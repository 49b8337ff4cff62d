#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/eval.hpp"
#include "trailmap/lanegt.hpp"
#include "trailmap/model.hpp"
#include "trailmap/synth.hpp"
#include "trailmap/tiling.hpp"

namespace trailmap {

struct RasterConfig {
  double w_glob = 60.0;
  double h_glob = 60.0;
  double r = 0.25;
  int n = 6;
  double sigma = 2.0;  // cells
  double v_max = 20.0;
  bool include_speed = true;

  GridSpec spec_template() const;
  int model_channels() const { return n + (include_speed ? 1 : 0); }
};

struct TilingConfig {
  bool augment = true;
  double rotation_min = -3.141592653589793;
  double rotation_max = 3.141592653589793;
  double keep_min = 0.3;
  double keep_max = 1.0;
  double samples_per_tile = 32.0;   // augmented samples per fixed 60 m tile area
  std::optional<Vec2> anchor;       // lattice point for the fixed grid; null = pose bbox corner
};

struct SynthConfig {
  std::vector<Layout> layouts{Layout::kStraight, Layout::kCurve, Layout::kTJunction, Layout::kCrossroads};
  int scenes_per_layout = 2;
  int lanes_per_direction = 1;
  bool one_way = false;
  double lane_width = 3.5;
  int trails_per_lane = 10;
  double lateral_noise_sigma = 0.3;
  double speed_mean = 10.0;
  double speed_std = 2.0;
  double junction_radius = 10.0;
  double junction_slowdown = 0.5;
  double margin = 2.0;
  double heading_jitter = 0.0;  // scene rotation drawn from [-jitter, jitter]
};

struct TrainConfig {
  int steps = 3000;
  int batch_size = 8;
  int warmup_steps = 100;
  double min_lr_scale = 0.02;  // floor of the cosine schedule
  bool use_augmented = true;
  int log_every = 50;
  OptimizerConfig optimizer;
  LossWeights loss;
};

struct InferConfig {
  double score_threshold = 0.1;
};

// Every tunable of the pipeline. JSON input must only contain known keys;
// missing keys keep their defaults.
struct PipelineConfig {
  std::uint64_t seed = 0;
  RasterConfig raster;
  TilingConfig tiling;
  GtConfig gt;
  ModelConfig model;  // in_channels, grid and init_seed are derived
  TrainConfig train;
  InferConfig infer;
  EvalConfig eval;
  SynthConfig synth;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);

  // Model config with input shape and init seed filled in.
  ModelConfig effective_model() const;
  AugmentationPolicy augmentation() const;
};

// FNV-1a 64 over bytes, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_hash(const std::string& path);
std::string config_hash(const PipelineConfig& config);

// Derived per-stage seeds.
enum class SeedStream : std::uint64_t { kSynth = 1, kAugment = 2, kInit = 3, kBatch = 4 };
std::uint64_t stage_seed(const PipelineConfig& config, SeedStream stream);

}  // namespace trailmap
