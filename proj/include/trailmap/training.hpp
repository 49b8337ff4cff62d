#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "trailmap/config.hpp"
#include "trailmap/model.hpp"

namespace trailmap {

// Linear warmup to 1, then cosine decay to min_lr_scale.
double lr_scale_at(const TrainConfig& config, int step);

struct TrainLogEntry {
  int step = 0;
  double lr_scale = 1.0;
  LossBreakdown loss;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogEntry> log;  // every log_every steps plus the last step
  LossBreakdown last;
};

// Adam training over `samples`. Batches are drawn by epoch-wise shuffling
// with an Rng seeded by `batch_seed`; when the batch covers every sample
// the full set is used each step.
TrainResult train_model(const ModelConfig& model_config, std::span<const TrainSample> samples,
                        const TrainConfig& config, std::uint64_t batch_seed,
                        const std::function<void(const TrainLogEntry&)>& on_log = {});

}  // namespace trailmap
