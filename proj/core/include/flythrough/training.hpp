#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flythrough/diffusion.hpp"
#include "flythrough/synthdata.hpp"
#include "flythrough/trajectory.hpp"

namespace flythrough {

struct OptimizerConfig {
  double lr = 1e-4;
  int warmup = 500;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ema_decay = 0.9999;
};

/// Adam moments, one buffer per parameter tensor in ParameterSet order.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t step = 0;

  void reset(const ParameterSet<float>& params);
};

double warmup_lr(const OptimizerConfig& config, std::int64_t step);

/// Decay actually applied after update `step` (1-based): min(d, (1 + step) / (10 + step)).
double effective_ema_decay(double decay, std::int64_t step);

/// Mean over ground pixels and channels of (pred - eps)^2. When `grad` is
/// non-null it receives dL/dpred. Returns 0 with zero gradient if no pixel is ground.
template <typename T>
double masked_eps_loss(const Tensor<T>& pred, const Tensor<T>& eps, const Mask& ground, Tensor<T>* grad);

void adam_update(ParameterSet<float>& params, AdamState& state, const OptimizerConfig& config);

/// One optimizer step on a batch of pairs; returns the batch-mean loss.
/// Throws std::runtime_error if the loss is not finite.
double training_step(DenoiserModel& model, std::span<const TrainingPair> batch, const NoiseSchedule& schedule,
                     AdamState& optimizer, const OptimizerConfig& config, const GuidanceConfig& guidance, Rng& rng);

/// Pseudo-pair sampling over a fixed set of ground-truth views.
struct PairSampler {
  double fov_lo = 45.0;
  double fov_hi = 70.0;
  TrainingPoseRange range;
  AutocruiseParams params;

  TrainingPair operator()(std::span<const RgbdImage> dataset, Rng& rng) const;
};

using StepCallback = std::function<void(std::int64_t step, double loss)>;

/// Runs optimizer steps until optimizer.step reaches `target_step`. Step k
/// draws from Rng(seed, "train").fork(k), so an interrupted run resumed from
/// a checkpoint continues exactly as if it had not stopped.
void train_until(DenoiserModel& model, AdamState& optimizer, std::span<const RgbdImage> dataset,
                 const NoiseSchedule& schedule, const OptimizerConfig& config, const GuidanceConfig& guidance,
                 const PairSampler& sampler, int batch, std::int64_t target_step, std::uint64_t seed,
                 const StepCallback& on_step = {});

inline constexpr double kTrainFovLo = 45.0;
inline constexpr double kTrainFovHi = 70.0;

}  // namespace flythrough
