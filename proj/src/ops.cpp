// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nio/tensor.hpp"

namespace nio {

namespace {

template <class T>
using Grads = std::vector<Tensor<T>>;

template <class T>
Tensor<T> emit(Tensor<T> value, const std::vector<Tensor<T>>& inputs, typename Tape<T>::BackwardFn fn) {
  if (!grad_mode_enabled()) return value;
  Tape<T>* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.on_tape()) continue;
    if (tape != nullptr && tape != in.tape()) {
      throw Error(ErrorCode::not_on_tape, "op inputs are recorded on different tapes");
    }
    tape = in.tape();
  }
  if (tape == nullptr) return value;
  return tape->record(std::move(value), inputs, std::move(fn));
}

void require_defined(bool ok, const char* op) {
  if (!ok) throw Error(ErrorCode::invalid_argument, std::string(op) + ": undefined tensor");
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a.defined() && b.defined(), op);
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void require_one_element(const Tensor<T>& s, const char* op) {
  require_defined(s.defined(), op);
  if (s.numel() != 1) {
    throw Error(ErrorCode::shape_mismatch, std::string(op) + ": expected a one-element tensor, got " +
                                               shape_str(s.shape()));
  }
}

template <class T, class F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
  std::vector<T> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<T>(a.shape(), std::move(out));
}

template <class T, class F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  std::vector<T> out(a.numel());
  const auto x = a.values();
  const auto y = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return Tensor<T>(a.shape(), std::move(out));
}

// Fixed-order reduction over eight interleaved lanes, combined pairwise.
template <class T, class F>
T lane_reduce(std::size_t n, F term) {
  constexpr std::size_t kLanes = 8;
  T lanes[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += term(i + l);
  }
  for (std::size_t l = 0; i < n; ++i, ++l) lanes[l] += term(i);
  for (std::size_t w = kLanes / 2; w > 0; w /= 2) {
    for (std::size_t l = 0; l < w; ++l) lanes[l] += lanes[l + w];
  }
  return lanes[0];
}

// C[M,N] += A[M,K] * B[K,N]. Each C entry accumulates over k in increasing
// order, independent of the blocking.
template <class T>
void gemm_accumulate(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m,
                     std::size_t k, std::size_t n) {
  constexpr std::size_t kBlock = 128;
  for (std::size_t k0 = 0; k0 < k; k0 += kBlock) {
    const std::size_t k1 = std::min(k, k0 + kBlock);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* __restrict c0 = c + i * n;
      T* __restrict c1 = c0 + n;
      T* __restrict c2 = c1 + n;
      T* __restrict c3 = c2 + n;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const T a0 = a[i * k + kk];
        const T a1 = a[(i + 1) * k + kk];
        const T a2 = a[(i + 2) * k + kk];
        const T a3 = a[(i + 3) * k + kk];
        const T* __restrict br = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T bv = br[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* __restrict ci = c + i * n;
      for (std::size_t kk = k0; kk < k1; ++kk) {
        const T av = a[i * k + kk];
        const T* __restrict br = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * br[j];
      }
    }
  }
}

// 1 / x with the convention 1 / 0 = 0. Internal: used by the sqrt adjoint so
// that the gradient of sqrt at zero is zero rather than infinite.
template <class T>
Tensor<T> reciprocal_or_zero(const Tensor<T>& a) {
  return emit(map_unary(a, [](T v) { return v == T(0) ? T(0) : T(1) / v; }), {a},
              [](const Tensor<T>& g, const Tensor<T>& y, const std::vector<bool>&) -> Grads<T> {
                return {neg(mul(g, mul(y, y)))};
              });
}

// [A, B, C] -> [B, A, C].
template <class T>
Tensor<T> swap01(const Tensor<T>& x) {
  const std::size_t a = x.shape()[0], b = x.shape()[1], c = x.shape()[2];
  std::vector<T> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      std::copy_n(in.begin() + (i * b + j) * c, c, out.begin() + (j * a + i) * c);
  return emit(Tensor<T>({b, a, c}, std::move(out)), {x},
              [](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {swap01(g)}; });
}

struct ConvGeometry {
  std::size_t batch, channels, height, width, kernel, padding, out_h, out_w;
};

template <class T>
Tensor<T> col2im(const Tensor<T>& cols, const Shape& image_shape, const ConvGeometry& geo);

// x [B, C, H, W] -> [C*K*K, B*Ho*Wo]
template <class T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeometry& geo) {
  const std::size_t kk = geo.kernel * geo.kernel;
  const std::size_t cols = geo.batch * geo.out_h * geo.out_w;
  std::vector<T> out(geo.channels * kk * cols, T(0));
  const auto in = x.values();
  for (std::size_t c = 0; c < geo.channels; ++c)
    for (std::size_t ky = 0; ky < geo.kernel; ++ky)
      for (std::size_t kx = 0; kx < geo.kernel; ++kx) {
        T* row = out.data() + ((c * geo.kernel + ky) * geo.kernel + kx) * cols;
        for (std::size_t b = 0; b < geo.batch; ++b)
          for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(geo.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height)) continue;
            for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(geo.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.width)) continue;
              row[(b * geo.out_h + oy) * geo.out_w + ox] =
                  in[((b * geo.channels + c) * geo.height + static_cast<std::size_t>(iy)) * geo.width +
                     static_cast<std::size_t>(ix)];
            }
          }
      }
  const Shape image_shape = x.shape();
  return emit(Tensor<T>({geo.channels * kk, cols}, std::move(out)), {x},
              [geo, image_shape](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {col2im(g, image_shape, geo)};
              });
}

template <class T>
Tensor<T> col2im(const Tensor<T>& cols_t, const Shape& image_shape, const ConvGeometry& geo) {
  const std::size_t cols = geo.batch * geo.out_h * geo.out_w;
  std::vector<T> out(shape_numel(image_shape), T(0));
  const auto in = cols_t.values();
  for (std::size_t c = 0; c < geo.channels; ++c)
    for (std::size_t ky = 0; ky < geo.kernel; ++ky)
      for (std::size_t kx = 0; kx < geo.kernel; ++kx) {
        const T* row = in.data() + ((c * geo.kernel + ky) * geo.kernel + kx) * cols;
        for (std::size_t b = 0; b < geo.batch; ++b)
          for (std::size_t oy = 0; oy < geo.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(geo.padding);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height)) continue;
            for (std::size_t ox = 0; ox < geo.out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(geo.padding);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.width)) continue;
              out[((b * geo.channels + c) * geo.height + static_cast<std::size_t>(iy)) * geo.width +
                  static_cast<std::size_t>(ix)] += row[(b * geo.out_h + oy) * geo.out_w + ox];
            }
          }
      }
  return emit(Tensor<T>(image_shape, std::move(out)), {cols_t},
              [geo](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {im2col(g, geo)}; });
}

template <class T>
Tensor<T> embed(const Tensor<T>& part, std::size_t offset, const Shape& whole_shape) {
  std::vector<T> out(shape_numel(whole_shape), T(0));
  const auto in = part.values();
  std::copy(in.begin(), in.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
  const Shape part_shape = part.shape();
  return emit(Tensor<T>(whole_shape, std::move(out)), {part},
              [offset, part_shape](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {slice(g, offset, part_shape)};
              });
}

}  // namespace

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  return emit(map_binary(a, b, [](T x, T y) { return x + y; }), {a, b},
              [](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {g, g}; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  return emit(map_binary(a, b, [](T x, T y) { return x - y; }), {a, b},
              [](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                return {g, needs[1] ? neg(g) : Tensor<T>()};
              });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  require_defined(a.defined(), "neg");
  return emit(map_unary(a, [](T x) { return -x; }), {a},
              [](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {neg(g)}; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  return emit(map_binary(a, b, [](T x, T y) { return x * y; }), {a, b},
              [a, b](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                return {needs[0] ? mul(g, b) : Tensor<T>(), needs[1] ? mul(g, a) : Tensor<T>()};
              });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "div");
  return emit(map_binary(a, b, [](T x, T y) { return x / y; }), {a, b},
              [a, b](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                Grads<T> out(2);
                if (needs[0]) out[0] = div(g, b);
                if (needs[1]) out[1] = neg(div(mul(g, a), mul(b, b)));
                return out;
              });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  require_defined(a.defined(), "scale");
  return emit(map_unary(a, [c](T x) { return x * c; }), {a},
              [c](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {scale(g, c)}; });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s) {
  require_defined(a.defined(), "mul_scalar");
  require_one_element(s, "mul_scalar");
  const T sv = s.at(0);
  return emit(map_unary(a, [sv](T x) { return x * sv; }), {a, s},
              [a, s](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                Grads<T> out(2);
                if (needs[0]) out[0] = mul_scalar(g, s);
                if (needs[1]) out[1] = reshape(dot(g, a), s.shape());
                return out;
              });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& a) {
  require_defined(a.defined(), "sqrt");
  for (T v : a.values()) {
    if (v < T(0)) throw Error(ErrorCode::numeric, "sqrt of a negative value");
  }
  return emit(map_unary(a, [](T x) { return std::sqrt(x); }), {a},
              [](const Tensor<T>& g, const Tensor<T>& y, const std::vector<bool>&) -> Grads<T> {
                return {mul(g, scale(reciprocal_or_zero(y), T(0.5)))};
              });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  require_defined(a.defined(), "relu");
  Tensor<T> mask = map_unary(a, [](T x) { return x > T(0) ? T(1) : T(0); });
  return emit(map_unary(a, [](T x) { return x > T(0) ? x : T(0); }), {a},
              [mask](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {mul(g, mask)}; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  require_defined(a.defined(), "tanh");
  return emit(map_unary(a, [](T x) { return std::tanh(x); }), {a},
              [](const Tensor<T>& g, const Tensor<T>& y, const std::vector<bool>&) -> Grads<T> {
                return {sub(g, mul(g, mul(y, y)))};
              });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require_defined(a.defined(), "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw Error(ErrorCode::shape_mismatch, "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> copy(a.values().begin(), a.values().end());
  const Shape original = a.shape();
  return emit(Tensor<T>(std::move(shape), std::move(copy)), {a},
              [original](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {reshape(g, original)}; });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  require_defined(a.defined(), "sum");
  const auto x = a.values();
  const T acc = lane_reduce<T>(x.size(), [&](std::size_t i) { return x[i]; });
  const Shape original = a.shape();
  return emit(Tensor<T>::scalar(acc), {a}, [original](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
    return {expand(g, original)};
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  require_defined(a.defined(), "mean");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <class T>
Tensor<T> expand(const Tensor<T>& s, Shape shape) {
  require_one_element(s, "expand");
  const Shape scalar_shape = s.shape();
  return emit(Tensor<T>::full(std::move(shape), s.at(0)), {s},
              [scalar_shape](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {reshape(sum(g), scalar_shape)};
              });
}

template <class T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a.defined() && b.defined(), "dot");
  if (a.numel() != b.numel()) {
    throw Error(ErrorCode::shape_mismatch, "dot: length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const auto x = a.values();
  const auto y = b.values();
  const T acc = lane_reduce<T>(x.size(), [&](std::size_t i) { return x[i] * y[i]; });
  return emit(Tensor<T>::scalar(acc), {a, b}, [a, b](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
    Grads<T> out(2);
    if (needs[0]) out[0] = reshape(mul_scalar(b, g), a.shape());
    if (needs[1]) out[1] = reshape(mul_scalar(a, g), b.shape());
    return out;
  });
}

template <class T>
Tensor<T> l2norm(const Tensor<T>& a) {
  require_defined(a.defined(), "l2norm");
  const auto x = a.values();
  const T acc = lane_reduce<T>(x.size(), [&](std::size_t i) { return x[i] * x[i]; });
  return emit(Tensor<T>::scalar(std::sqrt(acc)), {a},
              [a](const Tensor<T>& g, const Tensor<T>& y, const std::vector<bool>&) -> Grads<T> {
                if (y.item() == T(0)) return {Tensor<T>::zeros(a.shape())};
                return {mul_scalar(a, div(g, y))};
              });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_defined(a.defined() && b.defined(), "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw Error(ErrorCode::shape_mismatch, "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n, T(0));
  gemm_accumulate(a.values().data(), b.values().data(), out.data(), m, k, n);
  return emit(Tensor<T>({m, n}, std::move(out)), {a, b},
              [a, b](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                Grads<T> grads(2);
                if (needs[0]) grads[0] = matmul(g, transpose(b));
                if (needs[1]) grads[1] = matmul(transpose(a), g);
                return grads;
              });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_defined(a.defined(), "transpose");
  if (a.rank() != 2) throw Error(ErrorCode::shape_mismatch, "transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<T> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return emit(Tensor<T>({c, r}, std::move(out)), {a},
              [](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> { return {transpose(g)}; });
}

template <class T>
Tensor<T> channel_sum(const Tensor<T>& x, std::size_t outer, std::size_t channels, std::size_t inner) {
  require_defined(x.defined(), "channel_sum");
  if (outer * channels * inner != x.numel()) {
    throw Error(ErrorCode::shape_mismatch, "channel_sum: layout does not cover " + shape_str(x.shape()));
  }
  std::vector<T> out(channels, T(0));
  const auto in = x.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c) {
      const T* p = in.data() + (o * channels + c) * inner;
      T acc = out[c];
      for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      out[c] = acc;
    }
  const Shape shape = x.shape();
  return emit(Tensor<T>({channels}, std::move(out)), {x},
              [shape, outer, inner](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {channel_broadcast(g, shape, outer, inner)};
              });
}

template <class T>
Tensor<T> channel_broadcast(const Tensor<T>& b, Shape shape, std::size_t outer, std::size_t inner) {
  require_defined(b.defined(), "channel_broadcast");
  const std::size_t channels = b.numel();
  if (outer * channels * inner != shape_numel(shape)) {
    throw Error(ErrorCode::shape_mismatch, "channel_broadcast: layout does not cover " + shape_str(shape));
  }
  std::vector<T> out(shape_numel(shape));
  const auto in = b.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c)
      std::fill_n(out.begin() + static_cast<std::ptrdiff_t>((o * channels + c) * inner), inner, in[c]);
  const Shape b_shape = b.shape();
  return emit(Tensor<T>(std::move(shape), std::move(out)), {b},
              [outer, channels, inner, b_shape](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {reshape(channel_sum(g, outer, channels, inner), b_shape)};
              });
}

template <class T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
  require_defined(x.defined() && b.defined(), "bias_add");
  if (x.rank() < 2 || b.numel() != x.shape()[1]) {
    throw Error(ErrorCode::shape_mismatch, "bias_add: bias " + shape_str(b.shape()) + " does not match axis 1 of " +
                                               shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / (x.shape()[0] * x.shape()[1]);
  return add(x, channel_broadcast(b, x.shape(), x.shape()[0], inner));
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  require_defined(logits.defined(), "softmax_rows");
  if (logits.rank() != 2) {
    throw Error(ErrorCode::shape_mismatch, "softmax_rows: expected a matrix, got " + shape_str(logits.shape()));
  }
  const std::size_t r = logits.shape()[0], c = logits.shape()[1];
  std::vector<T> out(logits.numel());
  const auto in = logits.values();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = in.data() + i * c;
    T* dst = out.data() + i * c;
    const T top = *std::max_element(row, row + c);
    T total = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      dst[j] = std::exp(row[j] - top);
      total += dst[j];
    }
    for (std::size_t j = 0; j < c; ++j) dst[j] /= total;
  }
  return emit(Tensor<T>(logits.shape(), std::move(out)), {logits},
              [r, c](const Tensor<T>& g, const Tensor<T>& y, const std::vector<bool>&) -> Grads<T> {
                // dx = y * (g - rowsum(g * y))
                const Tensor<T> row_dot = channel_sum(mul(g, y), 1, r, c);
                return {mul(y, sub(g, channel_broadcast(row_dot, y.shape(), 1, c)))};
              });
}

template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_defined(logits.defined(), "softmax_cross_entropy");
  if (logits.rank() != 2 || logits.shape()[0] != labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                                               " do not match " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  std::vector<T> onehot(logits.numel(), T(0));
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw Error(ErrorCode::invalid_argument, "label " + std::to_string(labels[i]) + " out of range [0, " +
                                                   std::to_string(classes) + ")");
    }
    onehot[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
  }
  const auto in = logits.values();
  T total = T(0);
  for (std::size_t i = 0; i < batch; ++i) {
    const T* row = in.data() + i * classes;
    const T top = *std::max_element(row, row + classes);
    T acc = T(0);
    for (std::size_t j = 0; j < classes; ++j) acc += std::exp(row[j] - top);
    total += top + std::log(acc) - row[labels[i]];
  }
  const T loss = total / static_cast<T>(batch);
  Tensor<T> target(logits.shape(), std::move(onehot));
  return emit(Tensor<T>::scalar(loss), {logits},
              [logits, target, batch](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                const Tensor<T> residual = scale(sub(softmax_rows(logits), target), T(1) / static_cast<T>(batch));
                return {mul_scalar(residual, g)};
              });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t padding) {
  require_defined(x.defined() && w.defined(), "conv2d");
  if (x.rank() != 4 || w.rank() != 4 || w.shape()[1] != x.shape()[1] || w.shape()[2] != w.shape()[3]) {
    throw Error(ErrorCode::shape_mismatch,
                "conv2d: incompatible input " + shape_str(x.shape()) + " and kernel " + shape_str(w.shape()));
  }
  ConvGeometry geo{};
  geo.batch = x.shape()[0];
  geo.channels = x.shape()[1];
  geo.height = x.shape()[2];
  geo.width = x.shape()[3];
  geo.kernel = w.shape()[2];
  geo.padding = padding;
  if (geo.height + 2 * padding < geo.kernel || geo.width + 2 * padding < geo.kernel) {
    throw Error(ErrorCode::shape_mismatch, "conv2d: kernel larger than padded input");
  }
  geo.out_h = geo.height + 2 * padding - geo.kernel + 1;
  geo.out_w = geo.width + 2 * padding - geo.kernel + 1;
  const std::size_t out_channels = w.shape()[0];
  const Tensor<T> cols = im2col(x, geo);
  const Tensor<T> w2 = reshape(w, {out_channels, geo.channels * geo.kernel * geo.kernel});
  const Tensor<T> y2 = matmul(w2, cols);  // [Cout, B*Ho*Wo]
  const Tensor<T> y3 = swap01(reshape(y2, {out_channels, geo.batch, geo.out_h * geo.out_w}));
  return reshape(y3, {geo.batch, out_channels, geo.out_h, geo.out_w});
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_defined(p.defined(), "concat");
    total += p.numel();
  }
  if (total == 0) throw Error(ErrorCode::shape_mismatch, "concat: nothing to concatenate");
  std::vector<T> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  return emit(Tensor<T>({total}, std::move(out)), parts,
              [shapes](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>& needs) -> Grads<T> {
                Grads<T> grads(shapes.size());
                std::size_t offset = 0;
                for (std::size_t k = 0; k < shapes.size(); ++k) {
                  if (needs[k]) grads[k] = slice(g, offset, shapes[k]);
                  offset += shape_numel(shapes[k]);
                }
                return grads;
              });
}

template <class T>
Tensor<T> slice(const Tensor<T>& flat, std::size_t offset, Shape shape) {
  require_defined(flat.defined(), "slice");
  const std::size_t n = shape_numel(shape);
  if (offset + n > flat.numel()) {
    throw Error(ErrorCode::shape_mismatch, "slice: range exceeds tensor of " + std::to_string(flat.numel()) + " elements");
  }
  const auto in = flat.values();
  std::vector<T> out(in.begin() + static_cast<std::ptrdiff_t>(offset),
                     in.begin() + static_cast<std::ptrdiff_t>(offset + n));
  const Shape whole = flat.shape();
  return emit(Tensor<T>(std::move(shape), std::move(out)), {flat},
              [offset, whole](const Tensor<T>& g, const Tensor<T>&, const std::vector<bool>&) -> Grads<T> {
                return {embed(g, offset, whole)};
              });
}

template <class T>
Tensor<T> rows(const Tensor<T>& x, std::size_t first, std::size_t count) {
  require_defined(x.defined(), "rows");
  if (x.rank() < 1 || count == 0 || first + count > x.shape()[0]) {
    throw Error(ErrorCode::shape_mismatch, "rows: range out of bounds for " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  const std::size_t row = x.numel() / shape[0];
  shape[0] = count;
  return slice(x, first * row, std::move(shape));
}

#define NIO_INSTANTIATE_OPS(T)                                                                         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> neg(const Tensor<T>&);                                                           \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                                      \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sqrt(const Tensor<T>&);                                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                          \
  template Tensor<T> tanh(const Tensor<T>&);                                                          \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                           \
  template Tensor<T> mean(const Tensor<T>&);                                                          \
  template Tensor<T> expand(const Tensor<T>&, Shape);                                                 \
  template Tensor<T> dot(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> l2norm(const Tensor<T>&);                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> transpose(const Tensor<T>&);                                                     \
  template Tensor<T> channel_sum(const Tensor<T>&, std::size_t, std::size_t, std::size_t);            \
  template Tensor<T> channel_broadcast(const Tensor<T>&, Shape, std::size_t, std::size_t);            \
  template Tensor<T> bias_add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                                  \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t);                         \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                           \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, Shape);                                     \
  template Tensor<T> rows(const Tensor<T>&, std::size_t, std::size_t);

NIO_INSTANTIATE_OPS(float)
NIO_INSTANTIATE_OPS(double)

#undef NIO_INSTANTIATE_OPS

}  // namespace nio
