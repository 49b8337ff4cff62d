#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "trailmap/autograd.hpp"
#include "trailmap/geometry.hpp"
#include "trailmap/grid_spec.hpp"

namespace trailmap {

struct ModelConfig {
  int in_channels = 7;
  int grid_w = 240;
  int grid_h = 240;
  int queries = 50;          // Q
  int points = 20;           // m
  int d_model = 128;
  int decoder_layers = 2;
  int heads = 4;
  int feature_stride = 16;   // power of two; one residual stage per factor 2
  bool score_head = true;
  int base_channels = 16;    // channels of the first encoder stage, doubled per stage up to d_model
  int ffn_dim = 256;
  int aux_queries = 10;      // Q' per copy; the one-to-many group has aux_copies * aux_queries queries
  int aux_copies = 6;        // K
  std::uint64_t init_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
};

struct Model {
  ModelConfig config;
  std::vector<Parameter> params;

  static Model initialize(const ModelConfig& config);
  std::size_t parameter_count() const;
  const Parameter& param(const std::string& name) const;
};

struct LossWeights {
  double one2one = 1.0;   // lambda_1, point L1 of the one-to-one group
  double one2many = 1.0;  // lambda_2, point L1 of the auxiliary group
  double score = 0.1;     // lambda_3, matchedness BCE (score head only)
  double dir = 0.01;      // lambda_4, edge-direction cosine term

  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double total = 0.0;
  double one2one = 0.0;
  double one2many = 0.0;
  double score = 0.0;
  double dir = 0.0;
  std::size_t matched = 0;

  LossBreakdown& operator+=(const LossBreakdown& o);
};

// Graph outputs of one forward pass. Coordinates are [queries, 2m] in the
// normalized tile frame, (x_0, y_0, x_1, ...). Logits are null without a
// score head; the auxiliary group is null when not requested.
struct ForwardGraph {
  ag::Var coords = nullptr;
  ag::Var logits = nullptr;
  ag::Var aux_coords = nullptr;
  ag::Var aux_logits = nullptr;
  std::vector<ag::Var> param_nodes;
};

// Builds the forward graph. Throws ShapeError before any compute when the
// input does not match [grid_w x grid_h x in_channels].
ForwardGraph build_forward(ag::Graph& g, const Model& model, std::span<const double> input, bool with_aux,
                           bool param_grads);

struct PredictionSet {
  std::vector<std::vector<Vec2>> polylines;  // [Q][m]
  std::optional<std::vector<double>> scores;
};

// Deterministic forward pass; coordinates stay normalized to [0, 1]^2.
PredictionSet forward(const Model& model, std::span<const double> input);

// Loss of predictions against targets (normalized tile frame), with the
// gradient with respect to the graph outputs seeded into `g` when requested.
// `aux` may be null for a main-group-only loss.
LossBreakdown set_loss(ag::Graph& g, const ForwardGraph& out, const ModelConfig& config,
                       std::span<const std::vector<Vec2>> targets, const LossWeights& weights, bool seed_grads);

struct TrainSample {
  std::string tile_id;
  std::vector<double> input;
  std::vector<std::vector<Vec2>> targets;  // normalized tile frame, m points each
};

// Loss and parameter gradients for one sample.
struct SampleGradient {
  LossBreakdown loss;
  std::vector<std::vector<double>> grads;  // aligned with model.params
};

SampleGradient compute_gradients(const Model& model, const TrainSample& sample, const LossWeights& weights);

// Loss only (used by finite-difference checks).
double total_loss(const Model& model, const TrainSample& sample, const LossWeights& weights);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  static AdamState for_model(const Model& model);
};

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip, 0 = off
};

// One gradient step over the batch (mean of per-sample gradients, reduced in
// batch order). Non-finite losses throw with the offending tile id.
LossBreakdown train_step(Model& model, AdamState& state, std::span<const TrainSample* const> batch,
                         const LossWeights& weights, const OptimizerConfig& opt, double lr_scale = 1.0);

// Single binary file: 8-byte magic, little-endian u64 header length, JSON
// header (version, config, tensor table), then little-endian float32 data.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& extra = {});
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

// Normalized tile frame <-> tile-frame meters.
std::vector<Vec2> normalize_path(std::span<const Vec2> tile_m, const GridSpec& spec);
std::vector<Vec2> denormalize_path(std::span<const Vec2> normalized, const GridSpec& spec);

}  // namespace trailmap
