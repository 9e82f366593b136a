#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flythrough {

/// Dense C×H×W activation, channel-planar.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  T* channel(int c) { return data.data() + c * plane(); }
  const T* channel(int c) const { return data.data() + c * plane(); }
  T& operator()(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  T operator()(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const Tensor& other) const {
    return channels == other.channels && height == other.height && width == other.width;
  }
  bool operator==(const Tensor& other) const = default;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(channels, height, width);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  std::size_t size() const { return value.size(); }
};

/// Ordered, name-addressable parameter collection with stable addresses.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->shape = std::move(shape);
    p->value.assign(n, T(0));
    p->grad.assign(n, T(0));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>& get(std::string_view name) {
    for (auto& p : params_)
      if (p->name == name) return *p;
    throw std::out_of_range("ParameterSet: no parameter named " + std::string(name));
  }
  const Parameter<T>& get(std::string_view name) const { return const_cast<ParameterSet*>(this)->get(name); }

  std::size_t count() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace flythrough
