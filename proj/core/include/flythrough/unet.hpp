#pragma once

#include <array>
#include <vector>

#include "flythrough/autodiff.hpp"
#include "flythrough/rng.hpp"
#include "flythrough/tensor.hpp"

namespace flythrough {

/// Three-level conv encoder-decoder with skip connections and per-block
/// noise-level modulation (FiLM from a sinusoidal timestep embedding).
struct UNetConfig {
  int in_channels = 9;
  int out_channels = 4;
  std::array<int, 3> channels{16, 32, 32};
  int time_features = 32;
  int embed_dim = 64;

  bool operator==(const UNetConfig&) const = default;
};

/// Sinusoidal features of an integer timestep: [sin(t w_i), cos(t w_i)].
template <typename T>
Tensor<T> timestep_features(int t, int dim);

enum class InitMode {
  standard,    // residual-branch output convs and the final conv start at zero
  all_random,  // every tensor random; used for gradient checks
};

template <typename T>
class UNet {
 public:
  explicit UNet(const UNetConfig& config = {});

  const UNetConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  void init(Rng& rng, InitMode mode = InitMode::standard);

  /// Records the forward pass on `tape` and returns the output node.
  Var forward(Tape<T>& tape, const Tensor<T>& input, int timestep);

  /// Forward pass without gradient bookkeeping.
  Tensor<T> apply(const Tensor<T>& input, int timestep);

 private:
  Var res_block(Tape<T>& tape, const std::string& name, Var x, Var emb);
  void add_res_block(const std::string& name, int channels);
  void add_conv(const std::string& name, int cout, int cin, int k = 3);
  void add_linear(const std::string& name, int out, int in);

  UNetConfig config_;
  ParameterSet<T> params_;
};

}  // namespace flythrough
