#include "flythrough/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "flythrough/geometry.hpp"

namespace flythrough {

void AdamState::reset(const ParameterSet<float>& params) {
  m.clear();
  v.clear();
  for (std::size_t i = 0; i < params.count(); ++i) {
    m.emplace_back(params[i].size(), 0.0f);
    v.emplace_back(params[i].size(), 0.0f);
  }
  step = 0;
}

double warmup_lr(const OptimizerConfig& config, std::int64_t step) {
  if (config.warmup <= 0) return config.lr;
  return config.lr * std::min(1.0, static_cast<double>(step) / config.warmup);
}

double effective_ema_decay(double decay, std::int64_t step) {
  return std::min(decay, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
}

template <typename T>
double masked_eps_loss(const Tensor<T>& pred, const Tensor<T>& eps, const Mask& ground, Tensor<T>* grad) {
  if (!pred.same_shape(eps)) throw std::invalid_argument("masked_eps_loss: shape mismatch");
  if (ground.width() != pred.width || ground.height() != pred.height)
    throw std::invalid_argument("masked_eps_loss: ground mask shape mismatch");
  if (grad) *grad = Tensor<T>(pred.channels, pred.height, pred.width);
  const std::size_t count = ground.count() * static_cast<std::size_t>(pred.channels);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  const std::size_t hw = pred.plane();
  double sum = 0.0;
  for (int c = 0; c < pred.channels; ++c) {
    const T* p = pred.channel(c);
    const T* e = eps.channel(c);
    T* g = grad ? grad->channel(c) : nullptr;
    for (std::size_t i = 0; i < hw; ++i) {
      if (!ground[i]) continue;
      const double d = static_cast<double>(p[i]) - static_cast<double>(e[i]);
      sum += d * d;
      if (g) g[i] = static_cast<T>(2.0 * d * inv);
    }
  }
  return sum * inv;
}

template double masked_eps_loss<float>(const Tensor<float>&, const Tensor<float>&, const Mask&, Tensor<float>*);
template double masked_eps_loss<double>(const Tensor<double>&, const Tensor<double>&, const Mask&, Tensor<double>*);

void adam_update(ParameterSet<float>& params, AdamState& state, const OptimizerConfig& config) {
  if (state.m.size() != params.count()) state.reset(params);
  const std::int64_t step = ++state.step;
  const double lr = warmup_lr(config, step);
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  const float b1 = static_cast<float>(config.beta1);
  const float b2 = static_cast<float>(config.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(config.eps);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const float g = p.grad[k];
      m[k] = b1 * m[k] + (1.0f - b1) * g;
      v[k] = b2 * v[k] + (1.0f - b2) * g * g;
      p.value[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

double training_step(DenoiserModel& model, std::span<const TrainingPair> batch, const NoiseSchedule& schedule,
                     AdamState& optimizer, const OptimizerConfig& config, const GuidanceConfig& guidance, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
  if (schedule.steps != model.meta.timesteps)
    throw std::invalid_argument("training_step: schedule length does not match the model");
  auto& net = model.net();
  net.parameters().zero_grad();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainingPair& pair = batch[b];
    const int t = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(schedule.steps)));
    const bool drop = rng.uniform() < guidance.dropout_prob;
    Tensor<float> eps(RgbdImage::kChannels, pair.target.height, pair.target.width);
    for (auto& v : eps.data) v = static_cast<float>(rng.normal());

    const Tensor<float> y_t = q_sample(to_network_space(pair.target), schedule.gamma_at(t), eps, pair.ground);
    const Tensor<float> x = drop ? Tensor<float>(4, y_t.height, y_t.width) : to_network_space(pair.corrupted);
    const Tensor<float> m = drop ? Tensor<float>(1, y_t.height, y_t.width) : mask_channel(pair.mask);

    Tape<float> tape(true);
    const Var out = net.forward(tape, denoiser_input(x, m, y_t), t);
    Tensor<float> grad;
    const double loss = masked_eps_loss(tape.value(out), eps, pair.ground, &grad);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "training_step: non-finite loss at step " << optimizer.step + 1 << " (batch item " << b << ", t=" << t
          << ", dropout=" << drop << ", ground pixels=" << pair.ground.count() << ")";
      throw std::runtime_error(msg.str());
    }
    for (auto& g : grad.data) g = static_cast<float>(g * inv_batch);
    tape.backward(out, grad);
    total += loss * inv_batch;
  }
  for (std::size_t i = 0; i < net.parameters().count(); ++i)
    for (float g : net.parameters()[i].grad)
      if (!std::isfinite(g))
        throw std::runtime_error("training_step: non-finite gradient in " + net.parameters()[i].name);

  adam_update(net.parameters(), optimizer, config);
  model.update_ema(effective_ema_decay(config.ema_decay, optimizer.step));
  model.meta.step = optimizer.step;
  return total;
}

TrainingPair PairSampler::operator()(std::span<const RgbdImage> dataset, Rng& rng) const {
  if (dataset.empty()) throw std::invalid_argument("PairSampler: empty dataset");
  const RgbdImage& gt = dataset[rng.uniform_index(dataset.size())];
  const double fov = rng.uniform(fov_lo, fov_hi);
  const Intrinsics K = intrinsics_from_fov(fov, gt.width, gt.height);
  return make_pseudo_pair(gt, CameraPose{}, K, range, params, rng);
}

void train_until(DenoiserModel& model, AdamState& optimizer, std::span<const RgbdImage> dataset,
                 const NoiseSchedule& schedule, const OptimizerConfig& config, const GuidanceConfig& guidance,
                 const PairSampler& sampler, int batch, std::int64_t target_step, std::uint64_t seed,
                 const StepCallback& on_step) {
  if (batch < 1) throw std::invalid_argument("train_until: batch must be >= 1");
  if (optimizer.m.size() != model.net().parameters().count()) {
    const std::int64_t step = optimizer.step;
    optimizer.reset(model.net().parameters());
    optimizer.step = step;
  }
  const Rng base(seed, "train");
  std::vector<TrainingPair> pairs(static_cast<std::size_t>(batch));
  while (optimizer.step < target_step) {
    const Rng step_rng = base.fork(static_cast<std::uint64_t>(optimizer.step + 1));
    Rng pair_rng = step_rng.fork("pairs");
    for (auto& p : pairs) p = sampler(dataset, pair_rng);
    Rng noise_rng = step_rng.fork("noise");
    const double loss = training_step(model, pairs, schedule, optimizer, config, guidance, noise_rng);
    if (on_step) on_step(optimizer.step, loss);
  }
}

}  // namespace flythrough
