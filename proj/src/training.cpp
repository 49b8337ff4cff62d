#include "trailmap/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "trailmap/errors.hpp"
#include "trailmap/rng.hpp"

namespace trailmap {

double lr_scale_at(const TrainConfig& t, int step) {
  if (step < t.warmup_steps) return static_cast<double>(step + 1) / static_cast<double>(t.warmup_steps);
  const int rest = std::max(1, t.steps - t.warmup_steps);
  const double progress = static_cast<double>(step - t.warmup_steps) / static_cast<double>(rest);
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return t.min_lr_scale + (1.0 - t.min_lr_scale) * cosine;
}

TrainResult train_model(const ModelConfig& model_config, std::span<const TrainSample> samples,
                        const TrainConfig& tc, std::uint64_t batch_seed,
                        const std::function<void(const TrainLogEntry&)>& on_log) {
  if (samples.empty()) throw ValidationError("no training samples");
  TrainResult r{Model::initialize(model_config), {}, {}};
  AdamState state = AdamState::for_model(r.model);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), samples.size());
  Rng rng(batch_seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = samples.size();

  for (int step = 0; step < tc.steps; ++step) {
    std::vector<const TrainSample*> b;
    if (batch == samples.size()) {
      for (const auto& s : samples) b.push_back(&s);
    } else {
      for (std::size_t k = 0; k < batch; ++k) {
        if (cursor == samples.size()) {
          for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
          cursor = 0;
        }
        b.push_back(&samples[order[cursor++]]);
      }
    }
    const double scale = lr_scale_at(tc, step);
    r.last = train_step(r.model, state, b, tc.loss, tc.optimizer, scale);
    if (tc.log_every > 0 && (step % tc.log_every == 0 || step + 1 == tc.steps)) {
      r.log.push_back({step, scale, r.last});
      if (on_log) on_log(r.log.back());
    }
  }
  return r;
}

}  // namespace trailmap
