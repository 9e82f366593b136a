#include "flythrough/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flythrough {

NoiseSchedule make_schedule(int steps, double beta_lo, double beta_hi) {
  if (steps < 1) throw std::invalid_argument("make_schedule: steps must be >= 1");
  if (!(beta_lo > 0.0 && beta_lo <= beta_hi && beta_hi < 1.0))
    throw std::invalid_argument("make_schedule: require 0 < beta_lo <= beta_hi < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.gamma.resize(steps);
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    s.beta[i] = beta_lo + frac * (beta_hi - beta_lo);
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.gamma[i] = running;
  }
  return s;
}

NoiseSchedule make_scaled_schedule(int steps, double beta_lo_2000, double beta_hi_2000) {
  if (steps < 1) throw std::invalid_argument("make_scaled_schedule: steps must be >= 1");
  const double scale = static_cast<double>(kReferenceSteps) / steps;
  return make_schedule(steps, beta_lo_2000 * scale, beta_hi_2000 * scale);
}

Tensor<float> to_network_space(const RgbdImage& image) {
  Tensor<float> out(RgbdImage::kChannels, image.height, image.width);
  const std::size_t n = image.pixel_count();
  for (int c = 0; c < RgbdImage::kChannels; ++c) {
    float* dst = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = 2.0f * image.at(i, c) - 1.0f;
  }
  return out;
}

RgbdImage from_network_space(const Tensor<float>& tensor) {
  if (tensor.channels != RgbdImage::kChannels) throw std::invalid_argument("from_network_space: expected 4 channels");
  RgbdImage out(tensor.width, tensor.height);
  const std::size_t n = out.pixel_count();
  for (int c = 0; c < RgbdImage::kChannels; ++c) {
    const float* src = tensor.channel(c);
    for (std::size_t i = 0; i < n; ++i) out.at(i, c) = std::clamp((src[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
  }
  return out;
}

Tensor<float> mask_channel(const Mask& mask) {
  Tensor<float> out(1, mask.height(), mask.width());
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] = mask[i] ? 1.0f : 0.0f;
  return out;
}

namespace {
void check_ground(const Tensor<float>& t, const Mask& ground, const char* what) {
  if (ground.width() != t.width || ground.height() != t.height)
    throw std::invalid_argument(std::string(what) + ": ground mask shape mismatch");
}
}  // namespace

Tensor<float> q_sample(const Tensor<float>& y, double gamma, const Tensor<float>& eps, const Mask& ground) {
  if (!y.same_shape(eps)) throw std::invalid_argument("q_sample: y and eps differ in shape");
  check_ground(y, ground, "q_sample");
  const double a = std::sqrt(gamma);
  const double b = std::sqrt(1.0 - gamma);
  Tensor<float> out = y;
  const std::size_t hw = y.plane();
  for (int c = 0; c < y.channels; ++c) {
    const float* ys = y.channel(c);
    const float* es = eps.channel(c);
    float* dst = out.channel(c);
    for (std::size_t i = 0; i < hw; ++i)
      if (ground[i]) dst[i] = static_cast<float>(a * ys[i] + b * es[i]);
  }
  return out;
}

Tensor<float> cfg_epsilon(const Tensor<float>& eps_cond, const Tensor<float>& eps_uncond, double w) {
  if (!eps_cond.same_shape(eps_uncond)) throw std::invalid_argument("cfg_epsilon: shape mismatch");
  if (w == 0.0) return eps_cond;
  Tensor<float> out = eps_cond;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = static_cast<float>((1.0 + w) * eps_cond.data[i] - w * eps_uncond.data[i]);
  return out;
}

Tensor<float> reverse_update(const Tensor<float>& y_t, const Tensor<float>& eps_hat, double alpha_t, double gamma_t,
                             const Tensor<float>* noise, const Mask& ground) {
  if (!y_t.same_shape(eps_hat)) throw std::invalid_argument("reverse_update: shape mismatch");
  if (noise && !noise->same_shape(y_t)) throw std::invalid_argument("reverse_update: noise shape mismatch");
  check_ground(y_t, ground, "reverse_update");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_t);
  const double eps_coef = gamma_t < 1.0 ? (1.0 - alpha_t) / std::sqrt(1.0 - gamma_t) : 0.0;
  const double sigma = std::sqrt(1.0 - alpha_t);
  Tensor<float> out = y_t;
  const std::size_t hw = y_t.plane();
  for (int c = 0; c < y_t.channels; ++c) {
    const float* ys = y_t.channel(c);
    const float* es = eps_hat.channel(c);
    const float* ns = noise ? noise->channel(c) : nullptr;
    float* dst = out.channel(c);
    for (std::size_t i = 0; i < hw; ++i) {
      if (!ground[i]) continue;
      double v = inv_sqrt_alpha * (ys[i] - eps_coef * es[i]);
      if (ns) v += sigma * ns[i];
      dst[i] = static_cast<float>(v);
    }
  }
  return out;
}

template <typename T>
Tensor<T> denoiser_input(const Tensor<T>& x, const Tensor<T>& m, const Tensor<T>& y_t) {
  if (x.channels != 4 || m.channels != 1 || y_t.channels != 4)
    throw std::invalid_argument("denoiser_input: expected 4 + 1 + 4 channels");
  if (x.height != m.height || x.width != m.width || !x.same_shape(y_t))
    throw std::invalid_argument("denoiser_input: spatial shape mismatch");
  Tensor<T> in(9, x.height, x.width);
  auto it = std::copy(x.data.begin(), x.data.end(), in.data.begin());
  it = std::copy(m.data.begin(), m.data.end(), it);
  std::copy(y_t.data.begin(), y_t.data.end(), it);
  return in;
}

template Tensor<float> denoiser_input<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> denoiser_input<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);

DenoiserModel::DenoiserModel(const UNetConfig& config) : net_(config), ema_(config) {}

void DenoiserModel::init(Rng& rng) {
  net_.init(rng);
  copy_net_to_ema();
}

void DenoiserModel::copy_net_to_ema() {
  for (std::size_t i = 0; i < net_.parameters().count(); ++i)
    ema_.parameters()[i].value = net_.parameters()[i].value;
}

void DenoiserModel::update_ema(double decay) {
  const float d = static_cast<float>(decay);
  for (std::size_t i = 0; i < net_.parameters().count(); ++i) {
    const auto& live = net_.parameters()[i].value;
    auto& shadow = ema_.parameters()[i].value;
    if (decay == 0.0) {
      shadow = live;
      continue;
    }
    for (std::size_t k = 0; k < live.size(); ++k) shadow[k] = d * shadow[k] + (1.0f - d) * live[k];
  }
}

Tensor<float> DenoiserModel::apply(const Tensor<float>& x, const Tensor<float>& m, const Tensor<float>& y_t, int t,
                                   bool use_ema) {
  if (t < 1 || t > meta.timesteps) throw std::invalid_argument("DenoiserModel::apply: timestep out of range");
  return (use_ema ? ema_ : net_).apply(denoiser_input(x, m, y_t), t);
}

Tensor<float> p_sample_step(DenoiserModel& model, const Tensor<float>& y_t, int t, const ConditionProvider& cond,
                            const NoiseSchedule& schedule, const GuidanceConfig& guidance, const Mask& ground, Rng& rng,
                            bool use_ema) {
  if (t < 1 || t > schedule.steps) throw std::invalid_argument("p_sample_step: t out of range");
  const Conditioning& c = cond(rng);
  Tensor<float> eps_hat = model.apply(c.image, c.mask, y_t, t, use_ema);
  if (guidance.weight != 0.0) {
    const Tensor<float> zero_x(c.image.channels, c.image.height, c.image.width);
    const Tensor<float> zero_m(1, c.mask.height, c.mask.width);
    eps_hat = cfg_epsilon(eps_hat, model.apply(zero_x, zero_m, y_t, t, use_ema), guidance.weight);
  }
  if (t == 1) return reverse_update(y_t, eps_hat, schedule.alpha_at(t), schedule.gamma_at(t), nullptr, ground);
  Tensor<float> noise(y_t.channels, y_t.height, y_t.width);
  for (auto& v : noise.data) v = static_cast<float>(rng.normal());
  return reverse_update(y_t, eps_hat, schedule.alpha_at(t), schedule.gamma_at(t), &noise, ground);
}

RgbdImage sample_refine(DenoiserModel& model, const ConditionProvider& cond, const NoiseSchedule& schedule,
                        const GuidanceConfig& guidance, const Mask& ground, const RgbdImage& sky_source, Rng& rng,
                        bool use_ema) {
  if (schedule.steps != model.meta.timesteps)
    throw std::invalid_argument("sample_refine: schedule length does not match the model");
  if (ground.width() != sky_source.width || ground.height() != sky_source.height)
    throw std::invalid_argument("sample_refine: ground mask shape mismatch");

  Tensor<float> y = to_network_space(sky_source);
  const std::size_t hw = y.plane();
  for (int c = 0; c < y.channels; ++c) {
    float* dst = y.channel(c);
    for (std::size_t i = 0; i < hw; ++i)
      if (ground[i]) dst[i] = static_cast<float>(rng.normal());
  }
  for (int t = schedule.steps; t >= 1; --t) y = p_sample_step(model, y, t, cond, schedule, guidance, ground, rng, use_ema);

  RgbdImage out = from_network_space(y);
  for (std::size_t i = 0; i < hw; ++i) {
    if (ground[i]) continue;
    for (int c = 0; c < RgbdImage::kChannels; ++c) out.at(i, c) = sky_source.at(i, c);
  }
  out.sky = ~ground;
  return out;
}

}  // namespace flythrough
