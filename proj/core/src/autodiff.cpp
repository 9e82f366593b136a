#include "flythrough/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace flythrough {

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  auto& node = nodes_[v.id];
  if (!node.grad) node.grad.emplace(node.value.channels, node.value.height, node.value.width);
  return *node.grad;
}

template <typename T>
void Tape<T>::backward(Var output, const Tensor<T>& seed) {
  if (!record_) throw std::logic_error("Tape::backward: tape was not recording");
  if (!seed.same_shape(value(output))) throw std::invalid_argument("Tape::backward: seed shape mismatch");
  grad(output) = seed;
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

// Dense kernels below keep a fixed summation order so results do not depend on buffer alignment.

// Rows [i, i + R) of c[m x n] += a[m x p] * b[p x n], all row-major. Every output sums over p in
// ascending order, with a block of c held in registers.
template <int R, typename T>
void gemm_rows(const T* a, const T* b, T* c, int i, int p, int n) {
  constexpr int kLanes = 32;
  int j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    T acc[R][kLanes];
    for (int r = 0; r < R; ++r)
      for (int l = 0; l < kLanes; ++l) acc[r][l] = c[static_cast<std::size_t>(i + r) * n + j + l];
    for (int q = 0; q < p; ++q) {
      const T* bq = b + static_cast<std::size_t>(q) * n + j;
      for (int r = 0; r < R; ++r) {
        const T v = a[static_cast<std::size_t>(i + r) * p + q];
        for (int l = 0; l < kLanes; ++l) acc[r][l] += v * bq[l];
      }
    }
    for (int r = 0; r < R; ++r)
      for (int l = 0; l < kLanes; ++l) c[static_cast<std::size_t>(i + r) * n + j + l] = acc[r][l];
  }
  if (j == n) return;
  for (int r = 0; r < R; ++r) {
    T* cr = c + static_cast<std::size_t>(i + r) * n;
    for (int q = 0; q < p; ++q) {
      const T v = a[static_cast<std::size_t>(i + r) * p + q];
      const T* bq = b + static_cast<std::size_t>(q) * n;
      for (int jj = j; jj < n; ++jj) cr[jj] += v * bq[jj];
    }
  }
}

template <typename T>
void gemm_add(const T* a, const T* b, T* c, int m, int p, int n) {
  int i = 0;
  for (; i + 8 <= m; i += 8) gemm_rows<8>(a, b, c, i, p, n);
  for (; i + 4 <= m; i += 4) gemm_rows<4>(a, b, c, i, p, n);
  for (; i < m; ++i) gemm_rows<1>(a, b, c, i, p, n);
}

template <typename T>
std::vector<T> transpose(const T* a, int rows, int cols) {
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = a[static_cast<std::size_t>(r) * cols + c];
  return out;
}

template <typename T>
void im2col(const Tensor<T>& x, int k, std::vector<T>& col) {
  const int pad = k / 2;
  const int h = x.height;
  const int w = x.width;
  const std::size_t hw = x.plane();
  col.assign(static_cast<std::size_t>(x.channels) * k * k * hw, T(0));
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          const T* row = src + static_cast<std::size_t>(y + dy) * w + dx;
          T* out = dst + static_cast<std::size_t>(y) * w;
          for (int xx = x0; xx < x1; ++xx) out[xx] = row[xx];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int k, Tensor<T>& dx) {
  const int pad = k / 2;
  const int h = dx.height;
  const int w = dx.width;
  const std::size_t hw = dx.plane();
  for (int c = 0; c < dx.channels; ++c) {
    T* dst = dx.channel(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int ddx = kx - pad;
        const int x0 = std::max(0, -ddx);
        const int x1 = std::min(w, w - ddx);
        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
          T* row = dst + static_cast<std::size_t>(y + dy) * w + ddx;
          const T* in = src + static_cast<std::size_t>(y) * w;
          for (int xx = x0; xx < x1; ++xx) row[xx] += in[xx];
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>& bias) {
  if (weight.shape.size() != 4 || weight.shape[2] != weight.shape[3])
    throw std::invalid_argument("conv2d: weight must be [cout, cin, k, k]");
  const int cout = weight.shape[0];
  const int cin = weight.shape[1];
  const int k = weight.shape[2];
  const Tensor<T>& in = tape.value(x);
  if (in.channels != cin) throw std::invalid_argument("conv2d: channel mismatch for " + weight.name);

  std::vector<T> col;
  im2col(in, k, col);
  const int kk = cin * k * k;
  const int n = static_cast<int>(in.plane());
  Tensor<T> out(cout, in.height, in.width);
  for (int c = 0; c < cout; ++c) std::fill(out.channel(c), out.channel(c) + n, bias.value[c]);
  gemm_add(weight.value.data(), col.data(), out.data.data(), cout, kk, n);
  const bool input_grad = tape.requires_grad(x);
  Var y = tape.push(std::move(out), true);
  if (!tape.recording()) return y;

  tape.on_backward([&tape, x, y, &weight, &bias, col = std::move(col), cout, kk, n, k, input_grad]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    const T* go = gy.data.data();
    const std::vector<T> col_t = transpose(col.data(), kk, n);
    gemm_add(go, col_t.data(), weight.grad.data(), cout, n, kk);
    for (int c = 0; c < cout; ++c) {
      const T* goc = go + static_cast<std::size_t>(c) * n;
      T bsum = T(0);
      for (int j = 0; j < n; ++j) bsum += goc[j];
      bias.grad[c] += bsum;
    }
    if (input_grad) {
      std::vector<T> gcol(static_cast<std::size_t>(kk) * n, T(0));
      const std::vector<T> w_t = transpose(weight.value.data(), cout, kk);
      gemm_add(w_t.data(), go, gcol.data(), kk, cout, n);
      col2im_add(gcol.data(), k, tape.grad(x));
    }
  });
  return y;
}

template <typename T>
Var silu(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.channels, in.height, in.width);
  for (std::size_t i = 0; i < in.size(); ++i) out.data[i] = in.data[i] * sigmoid(in.data[i]);
  const bool needs = tape.requires_grad(x);
  Var y = tape.push(std::move(out), needs);
  if (!needs) return y;
  tape.on_backward([&tape, x, y]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& in = tape.value(x);
    const Tensor<T>& gy = tape.grad(y);
    Tensor<T>& gx = tape.grad(x);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const T s = sigmoid(in.data[i]);
      gx.data[i] += gy.data[i] * (s + in.data[i] * s * (T(1) - s));
    }
  });
  return y;
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor<T> out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  Var y = tape.push(std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  tape.on_backward([&tape, a, b, y, ga, gb]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    if (ga) {
      auto& g = tape.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[i];
    }
    if (gb) {
      auto& g = tape.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[i];
    }
  });
  return y;
}

template <typename T>
Var film(Tape<T>& tape, Var x, Var scale_shift) {
  const Tensor<T>& in = tape.value(x);
  const Tensor<T>& ss = tape.value(scale_shift);
  const int c = in.channels;
  if (static_cast<int>(ss.size()) != 2 * c) throw std::invalid_argument("film: scale/shift size mismatch");
  const std::size_t hw = in.plane();
  Tensor<T> out(in.channels, in.height, in.width);
  for (int ch = 0; ch < c; ++ch) {
    const T scale = T(1) + ss.data[ch];
    const T shift = ss.data[c + ch];
    const T* src = in.channel(ch);
    T* dst = out.channel(ch);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
  }
  const bool gx_needed = tape.requires_grad(x);
  const bool gs_needed = tape.requires_grad(scale_shift);
  Var y = tape.push(std::move(out), gx_needed || gs_needed);
  if (!(gx_needed || gs_needed)) return y;
  tape.on_backward([&tape, x, scale_shift, y, c, hw, gx_needed, gs_needed]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    const Tensor<T>& in = tape.value(x);
    const Tensor<T>& ss = tape.value(scale_shift);
    for (int ch = 0; ch < c; ++ch) {
      const T* g = gy.channel(ch);
      if (gx_needed) {
        T* gx = tape.grad(x).channel(ch);
        const T scale = T(1) + ss.data[ch];
        for (std::size_t i = 0; i < hw; ++i) gx[i] += g[i] * scale;
      }
      if (gs_needed) {
        const T* src = in.channel(ch);
        T dscale = 0;
        T dshift = 0;
        for (std::size_t i = 0; i < hw; ++i) {
          dscale += g[i] * src[i];
          dshift += g[i];
        }
        auto& gss = tape.grad(scale_shift);
        gss.data[ch] += dscale;
        gss.data[c + ch] += dshift;
      }
    }
  });
  return y;
}

template <typename T>
Var avg_pool2(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  if (in.height % 2 != 0 || in.width % 2 != 0) throw std::invalid_argument("avg_pool2: odd spatial size");
  Tensor<T> out(in.channels, in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx)
        out(c, y, xx) = (in(c, 2 * y, 2 * xx) + in(c, 2 * y, 2 * xx + 1) + in(c, 2 * y + 1, 2 * xx) +
                         in(c, 2 * y + 1, 2 * xx + 1)) * T(0.25);
  const bool needs = tape.requires_grad(x);
  Var y = tape.push(std::move(out), needs);
  if (!needs) return y;
  tape.on_backward([&tape, x, y]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    Tensor<T>& gx = tape.grad(x);
    for (int c = 0; c < gy.channels; ++c)
      for (int yy = 0; yy < gy.height; ++yy)
        for (int xx = 0; xx < gy.width; ++xx) {
          const T g = gy(c, yy, xx) * T(0.25);
          gx(c, 2 * yy, 2 * xx) += g;
          gx(c, 2 * yy, 2 * xx + 1) += g;
          gx(c, 2 * yy + 1, 2 * xx) += g;
          gx(c, 2 * yy + 1, 2 * xx + 1) += g;
        }
  });
  return y;
}

template <typename T>
Var upsample2(Tape<T>& tape, Var x) {
  const Tensor<T>& in = tape.value(x);
  Tensor<T> out(in.channels, in.height * 2, in.width * 2);
  for (int c = 0; c < out.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx) out(c, y, xx) = in(c, y / 2, xx / 2);
  const bool needs = tape.requires_grad(x);
  Var y = tape.push(std::move(out), needs);
  if (!needs) return y;
  tape.on_backward([&tape, x, y]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    Tensor<T>& gx = tape.grad(x);
    for (int c = 0; c < gy.channels; ++c)
      for (int yy = 0; yy < gy.height; ++yy)
        for (int xx = 0; xx < gy.width; ++xx) gx(c, yy / 2, xx / 2) += gy(c, yy, xx);
  });
  return y;
}

template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.height != vb.height || va.width != vb.width) throw std::invalid_argument("concat: spatial mismatch");
  Tensor<T> out(va.channels + vb.channels, va.height, va.width);
  std::copy(va.data.begin(), va.data.end(), out.data.begin());
  std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(va.size()));
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  const std::size_t split = va.size();
  Var y = tape.push(std::move(out), ga || gb);
  if (!(ga || gb)) return y;
  tape.on_backward([&tape, a, b, y, ga, gb, split]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    if (ga) {
      auto& g = tape.grad(a);
      for (std::size_t i = 0; i < split; ++i) g.data[i] += gy.data[i];
    }
    if (gb) {
      auto& g = tape.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += gy.data[split + i];
    }
  });
  return y;
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>& bias) {
  const Tensor<T>& in = tape.value(x);
  const int out_dim = weight.shape[0];
  const int in_dim = weight.shape[1];
  if (static_cast<int>(in.size()) != in_dim) throw std::invalid_argument("linear: input size mismatch for " + weight.name);
  Tensor<T> out(out_dim, 1, 1);
  for (int o = 0; o < out_dim; ++o) {
    T acc = bias.value[o];
    const T* row = weight.value.data() + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) acc += row[i] * in.data[i];
    out.data[o] = acc;
  }
  const bool input_grad = tape.requires_grad(x);
  Var y = tape.push(std::move(out), true);
  if (!tape.recording()) return y;
  tape.on_backward([&tape, x, y, &weight, &bias, out_dim, in_dim, input_grad]() {
    if (!tape.has_grad(y)) return;
    const Tensor<T>& gy = tape.grad(y);
    const Tensor<T>& in = tape.value(x);
    for (int o = 0; o < out_dim; ++o) {
      const T g = gy.data[o];
      bias.grad[o] += g;
      T* grow = weight.grad.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) grow[i] += g * in.data[i];
    }
    if (input_grad) {
      Tensor<T>& gx = tape.grad(x);
      for (int o = 0; o < out_dim; ++o) {
        const T g = gy.data[o];
        const T* row = weight.value.data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) gx.data[i] += g * row[i];
      }
    }
  });
  return y;
}

#define FLYTHROUGH_INSTANTIATE_OPS(T)                                   \
  template Var conv2d<T>(Tape<T>&, Var, Parameter<T>&, Parameter<T>&); \
  template Var silu<T>(Tape<T>&, Var);                                  \
  template Var add<T>(Tape<T>&, Var, Var);                              \
  template Var film<T>(Tape<T>&, Var, Var);                             \
  template Var avg_pool2<T>(Tape<T>&, Var);                             \
  template Var upsample2<T>(Tape<T>&, Var);                             \
  template Var concat<T>(Tape<T>&, Var, Var);                           \
  template Var linear<T>(Tape<T>&, Var, Parameter<T>&, Parameter<T>&);

FLYTHROUGH_INSTANTIATE_OPS(float)
FLYTHROUGH_INSTANTIATE_OPS(double)

}  // namespace ops

template class Tape<float>;
template class Tape<double>;

}  // namespace flythrough
