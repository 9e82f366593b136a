#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "flythrough/tensor.hpp"

namespace flythrough {

struct Var {
  int id = -1;
};

/// Reverse-mode tape. Ops append nodes and, when recording, a backward
/// closure; `backward` replays closures in reverse order. Parameter
/// gradients accumulate directly into Parameter::grad.
template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false); }
  Var push(Tensor<T> value, bool requires_grad);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool has_grad(Var v) const { return nodes_[v.id].grad.has_value(); }
  /// Gradient buffer, zero-initialized on first access.
  Tensor<T>& grad(Var v);

  void on_backward(std::function<void()> fn) {
    if (record_) backward_.push_back(std::move(fn));
  }

  void backward(Var output, const Tensor<T>& seed);

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_;
};

namespace ops {

/// Same-padded k×k convolution, stride 1. weight: [cout, cin, k, k], bias: [cout].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>& bias);

template <typename T>
Var silu(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// x * (1 + scale) + shift, with (scale, shift) = split of a 2C-vector.
template <typename T>
Var film(Tape<T>& tape, Var x, Var scale_shift);

template <typename T>
Var avg_pool2(Tape<T>& tape, Var x);

template <typename T>
Var upsample2(Tape<T>& tape, Var x);

template <typename T>
Var concat(Tape<T>& tape, Var a, Var b);

/// weight: [out, in], x: [in, 1, 1].
template <typename T>
Var linear(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>& bias);

}  // namespace ops
}  // namespace flythrough
