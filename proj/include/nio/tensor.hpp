// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major tensors with a reverse-mode differentiation tape.
//
// Every adjoint rule is itself written in terms of the recorded ops below, so
// a backward pass run with create_graph = true appends its own nodes to the
// tape and the resulting gradients can be differentiated again.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nio/error.hpp"

namespace nio {

enum class DType { f32, f64 };

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::f32;
};
template <>
struct dtype_of<double> {
  static constexpr DType value = DType::f64;
};

const char* dtype_name(DType dtype);
DType parse_dtype(std::string_view name);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
class Tape;

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  bool defined() const noexcept { return data_ != nullptr; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_ ? data_->size() : 0; }
  std::span<const T> values() const noexcept;
  T at(std::size_t flat_index) const { return (*data_)[flat_index]; }
  /// Value of a one-element tensor.
  T item() const;

  bool on_tape() const noexcept { return tape_ != nullptr; }
  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

  /// Same values, detached from any tape.
  Tensor detach() const;

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<const std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Append-only record of operations. Node ids are assigned in creation order,
/// so every node's inputs precede it. Tensors keep a raw pointer to their
/// tape: the tape must outlive every tensor recorded on it.
template <class T>
class Tape {
 public:
  /// Maps the output adjoint (and the recorded output itself) to one adjoint
  /// per input. `needs[k]` tells
  /// whether input k is on the tape and within reach of the current pass;
  /// adjoints of other inputs may be left undefined.
  using BackwardFn = std::function<std::vector<Tensor<T>>(
      const Tensor<T>& grad_out, const Tensor<T>& output, const std::vector<bool>& needs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor<T> variable(const Tensor<T>& value);

  /// Records `value` as the output of an op with the given inputs. Used by
  /// op implementations.
  Tensor<T> record(Tensor<T> value, const std::vector<Tensor<T>>& inputs, BackwardFn fn);

  std::vector<Tensor<T>> backward(const Tensor<T>& output, std::span<const Tensor<T>> wrt,
                                  bool create_graph);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// One flag per backward pass run on this tape: whether it recorded its outputs.
  const std::vector<bool>& backward_passes() const noexcept { return passes_; }

 private:
  struct Node {
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor<T> output;
  };

  std::vector<Node> nodes_;
  std::vector<bool> passes_;
};

/// d output / d wrt[k] for a scalar output. Gradients of unreachable wrt
/// tensors are zeros.
template <class T>
std::vector<Tensor<T>> backward(const Tensor<T>& output, const std::vector<Tensor<T>>& wrt,
                                bool create_graph = false);

/// Whether ops currently record onto tapes (thread-local).
bool grad_mode_enabled() noexcept;

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Recorded ops. Outputs are recorded when grad mode is on and any input is on
// a tape; all taped inputs must share one tape.

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> neg(const Tensor<T>& a);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
/// a * c for a constant c.
template <class T> Tensor<T> scale(const Tensor<T>& a, T c);
/// a * s for a one-element tensor s.
template <class T> Tensor<T> mul_scalar(const Tensor<T>& a, const Tensor<T>& s);
template <class T> Tensor<T> sqrt(const Tensor<T>& a);
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> tanh(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
/// Broadcast a one-element tensor to `shape`.
template <class T> Tensor<T> expand(const Tensor<T>& s, Shape shape);
template <class T> Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);
/// Euclidean norm over all elements. The gradient at the zero vector is zero.
template <class T> Tensor<T> l2norm(const Tensor<T>& a);
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> transpose(const Tensor<T>& a);

/// Views x as [outer, channels, inner] and sums over outer and inner.
template <class T> Tensor<T> channel_sum(const Tensor<T>& x, std::size_t outer,
                                         std::size_t channels, std::size_t inner);
/// Inverse layout of channel_sum: b[channels] broadcast to `shape`.
template <class T> Tensor<T> channel_broadcast(const Tensor<T>& b, Shape shape, std::size_t outer,
                                               std::size_t inner);
/// x + b along axis 1 (features of a matrix, channels of an NCHW tensor).
template <class T> Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b);

/// Row-wise softmax of a [rows, cols] matrix.
template <class T> Tensor<T> softmax_rows(const Tensor<T>& logits);
/// Mean softmax cross-entropy of [batch, classes] logits.
template <class T> Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                                   std::span<const int> labels);

/// 2-D convolution, stride 1, symmetric zero padding. x: [B, Cin, H, W],
/// w: [Cout, Cin, K, K] -> [B, Cout, H + 2p - K + 1, W + 2p - K + 1].
template <class T> Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t padding);

/// Flattens and concatenates the inputs into one vector.
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);
/// Contiguous range [offset, offset + numel(shape)) of a tensor's flat data.
template <class T> Tensor<T> slice(const Tensor<T>& flat, std::size_t offset, Shape shape);
/// Leading-axis rows [first, first + count).
template <class T> Tensor<T> rows(const Tensor<T>& x, std::size_t first, std::size_t count);

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12),
/// where the analytic gradient comes from the tape and the central difference
/// uses the given step.
template <class T>
double grad_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                  const std::vector<Tensor<T>>& point, double step);

}  // namespace nio
