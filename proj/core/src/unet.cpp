#include "flythrough/unet.hpp"

#include <cmath>
#include <string>

namespace flythrough {

template <typename T>
Tensor<T> timestep_features(int t, int dim) {
  Tensor<T> out(dim, 1, 1);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out.data[i] = static_cast<T>(std::sin(t * freq));
    out.data[half + i] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
  const auto [c1, c2, c3] = config_.channels;
  const int e = config_.embed_dim;
  add_linear("temb.fc1", e, config_.time_features);
  add_linear("temb.fc2", e, e);
  add_conv("in", c1, config_.in_channels);
  add_res_block("enc1", c1);
  add_conv("down1", c2, c1);
  add_res_block("enc2", c2);
  add_conv("down2", c3, c2);
  add_res_block("mid", c3);
  add_conv("up2", c2, c3 + c2);
  add_res_block("dec2", c2);
  add_conv("up1", c1, c2 + c1);
  add_res_block("dec1", c1);
  add_conv("out", config_.out_channels, c1);
}

template <typename T>
void UNet<T>::add_conv(const std::string& name, int cout, int cin, int k) {
  params_.add(name + ".weight", {cout, cin, k, k});
  params_.add(name + ".bias", {cout});
}

template <typename T>
void UNet<T>::add_linear(const std::string& name, int out, int in) {
  params_.add(name + ".weight", {out, in});
  params_.add(name + ".bias", {out});
}

template <typename T>
void UNet<T>::add_res_block(const std::string& name, int channels) {
  add_conv(name + ".conv1", channels, channels);
  add_linear(name + ".film", 2 * channels, config_.embed_dim);
  add_conv(name + ".conv2", channels, channels);
}

template <typename T>
void UNet<T>::init(Rng& rng, InitMode mode) {
  for (std::size_t i = 0; i < params_.count(); ++i) {
    auto& p = params_[i];
    const bool is_bias = p.shape.size() == 1;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < p.shape.size(); ++d) fan_in *= static_cast<std::size_t>(p.shape[d]);
    const bool zero_start = mode == InitMode::standard &&
                            (p.name.starts_with("out.") || p.name.find(".conv2.") != std::string::npos);
    if (zero_start) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    if (is_bias && mode == InitMode::standard) {
      std::fill(p.value.begin(), p.value.end(), T(0));
      continue;
    }
    const double bound = is_bias ? 0.1 : std::sqrt((p.shape.size() == 4 ? 6.0 : 3.0) / static_cast<double>(fan_in));
    for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  params_.zero_grad();
}

template <typename T>
Var UNet<T>::res_block(Tape<T>& tape, const std::string& name, Var x, Var emb) {
  Var h = ops::conv2d(tape, ops::silu(tape, x), params_.get(name + ".conv1.weight"), params_.get(name + ".conv1.bias"));
  Var ss = ops::linear(tape, emb, params_.get(name + ".film.weight"), params_.get(name + ".film.bias"));
  h = ops::film(tape, h, ss);
  h = ops::conv2d(tape, ops::silu(tape, h), params_.get(name + ".conv2.weight"), params_.get(name + ".conv2.bias"));
  return ops::add(tape, x, h);
}

template <typename T>
Var UNet<T>::forward(Tape<T>& tape, const Tensor<T>& input, int timestep) {
  if (input.channels != config_.in_channels) throw std::invalid_argument("UNet: wrong input channel count");
  if (input.height % 4 != 0 || input.width % 4 != 0)
    throw std::invalid_argument("UNet: spatial size must be divisible by 4");
  auto& p = params_;
  auto conv = [&](const std::string& name, Var v) {
    return ops::conv2d(tape, v, p.get(name + ".weight"), p.get(name + ".bias"));
  };

  Var t = tape.constant(timestep_features<T>(timestep, config_.time_features));
  Var emb = ops::silu(tape, ops::linear(tape, t, p.get("temb.fc1.weight"), p.get("temb.fc1.bias")));
  emb = ops::silu(tape, ops::linear(tape, emb, p.get("temb.fc2.weight"), p.get("temb.fc2.bias")));

  Var x = tape.constant(input);
  Var h1 = res_block(tape, "enc1", conv("in", x), emb);
  Var h2 = res_block(tape, "enc2", ops::silu(tape, conv("down1", ops::avg_pool2(tape, h1))), emb);
  Var h3 = res_block(tape, "mid", ops::silu(tape, conv("down2", ops::avg_pool2(tape, h2))), emb);
  Var u2 = ops::silu(tape, conv("up2", ops::concat(tape, ops::upsample2(tape, h3), h2)));
  u2 = res_block(tape, "dec2", u2, emb);
  Var u1 = ops::silu(tape, conv("up1", ops::concat(tape, ops::upsample2(tape, u2), h1)));
  u1 = res_block(tape, "dec1", u1, emb);
  return conv("out", ops::silu(tape, u1));
}

template <typename T>
Tensor<T> UNet<T>::apply(const Tensor<T>& input, int timestep) {
  Tape<T> tape(false);
  const Var out = forward(tape, input, timestep);
  return tape.value(out);
}

template Tensor<float> timestep_features<float>(int, int);
template Tensor<double> timestep_features<double>(int, int);
template class UNet<float>;
template class UNet<double>;

}  // namespace flythrough
