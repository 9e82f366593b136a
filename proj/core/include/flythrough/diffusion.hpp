#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flythrough/image.hpp"
#include "flythrough/rng.hpp"
#include "flythrough/tensor.hpp"
#include "flythrough/unet.hpp"

namespace flythrough {

/// Linear beta schedule. Arrays are indexed by t - 1 for t in [1, steps].
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> gamma;

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  double gamma_at(int t) const { return gamma[static_cast<std::size_t>(t - 1)]; }
};

NoiseSchedule make_schedule(int steps, double beta_lo, double beta_hi);

/// Schedule whose betas are specified for 2000 steps and rescaled by
/// 2000 / steps, which keeps the sum of betas (and so gamma_T) roughly fixed.
NoiseSchedule make_scaled_schedule(int steps, double beta_lo_2000, double beta_hi_2000);

inline constexpr int kReferenceSteps = 2000;

/// RGBD in [0,1] to 4-channel planar tensor in [-1,1].
Tensor<float> to_network_space(const RgbdImage& image);
/// Inverse of to_network_space, clamping every channel to [0,1].
RgbdImage from_network_space(const Tensor<float>& tensor);
Tensor<float> mask_channel(const Mask& mask);

/// Ground pixels get sqrt(gamma) y + sqrt(1 - gamma) eps; sky pixels stay y.
Tensor<float> q_sample(const Tensor<float>& y, double gamma, const Tensor<float>& eps, const Mask& ground);

/// (1 + w) eps_cond - w eps_uncond.
Tensor<float> cfg_epsilon(const Tensor<float>& eps_cond, const Tensor<float>& eps_uncond, double w);

/// One reverse step on ground pixels:
/// (y_t - (1 - alpha_t) / sqrt(1 - gamma_t) eps_hat) / sqrt(alpha_t) + sqrt(1 - alpha_t) noise.
/// A null `noise` means no noise term. Non-ground pixels are copied from y_t.
Tensor<float> reverse_update(const Tensor<float>& y_t, const Tensor<float>& eps_hat, double alpha_t, double gamma_t,
                             const Tensor<float>* noise, const Mask& ground);

template <typename T>
Tensor<T> denoiser_input(const Tensor<T>& x, const Tensor<T>& m, const Tensor<T>& y_t);

struct ModelMeta {
  std::int64_t step = 0;
  int timesteps = 250;
  int resolution = 32;
  std::uint64_t config_hash = 0;
};

/// Conditional noise predictor with an EMA shadow of its parameters.
class DenoiserModel {
 public:
  explicit DenoiserModel(const UNetConfig& config = {});

  const UNetConfig& config() const { return net_.config(); }
  UNet<float>& net() { return net_; }
  UNet<float>& ema() { return ema_; }
  const UNet<float>& net() const { return net_; }
  const UNet<float>& ema() const { return ema_; }

  /// Random init of the live weights; the EMA copy starts identical.
  void init(Rng& rng);
  void copy_net_to_ema();
  /// ema <- decay * ema + (1 - decay) * theta.
  void update_ema(double decay);

  Tensor<float> apply(const Tensor<float>& x, const Tensor<float>& m, const Tensor<float>& y_t, int t, bool use_ema);

  ModelMeta meta;

 private:
  UNet<float> net_;
  UNet<float> ema_;
};

struct GuidanceConfig {
  double weight = 1.0;
  double dropout_prob = 0.1;
};

/// One conditioning image for the denoiser, already in network space.
struct Conditioning {
  Tensor<float> image;  // 4 channels
  Tensor<float> mask;   // 1 channel
  int source = 0;
};

/// Draws the conditioning for one denoising step.
using ConditionProvider = std::function<const Conditioning&(Rng&)>;

Tensor<float> p_sample_step(DenoiserModel& model, const Tensor<float>& y_t, int t, const ConditionProvider& cond,
                            const NoiseSchedule& schedule, const GuidanceConfig& guidance, const Mask& ground, Rng& rng,
                            bool use_ema = true);

/// Full reverse chain from t = T to 1. Non-ground pixels are taken bit-exactly
/// from `sky_source`; the returned image's sky mask is the complement of `ground`.
RgbdImage sample_refine(DenoiserModel& model, const ConditionProvider& cond, const NoiseSchedule& schedule,
                        const GuidanceConfig& guidance, const Mask& ground, const RgbdImage& sky_source, Rng& rng,
                        bool use_ema = true);

}  // namespace flythrough
