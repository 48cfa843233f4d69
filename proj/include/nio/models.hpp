// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nio/tensor.hpp"

namespace nio {

enum class LayerKind { linear, conv2d, relu, tanh, flatten, bias };

/// dims by kind: linear {fan_in, fan_out}; conv2d {in_channels, out_channels,
/// kernel, padding}; bias {channels}; relu/tanh/flatten {}.
struct LayerSpec {
  LayerKind kind;
  std::vector<std::size_t> dims;
};

/// Feed-forward classifier. The loss is always mean softmax cross-entropy.
struct ModelSpec {
  std::string name;
  Shape input_shape;  // per sample
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;
};

/// Name, shape and fan of every learnable tensor, in parameter order.
struct ParamInfo {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool is_bias = false;
};

/// Checks dimension compatibility layer by layer and returns the parameter layout.
std::vector<ParamInfo> param_layout(const ModelSpec& spec);

/// flatten, 784 -> 256 -> 128 -> classes with bias + relu between linear layers.
ModelSpec make_mlp3(const Shape& input_shape, std::size_t num_classes, std::size_t hidden1 = 256,
                    std::size_t hidden2 = 128);
/// Two 3x3 conv2d + bias + relu blocks (padding 1), flatten, linear + bias.
ModelSpec make_cnn4(const Shape& input_shape, std::size_t num_classes, std::size_t channels1 = 8,
                    std::size_t channels2 = 16);
/// "mlp3", "cnn4", or a comma-separated layer list such as
/// "flatten,linear:784:32,bias:32,relu,linear:32:10,bias:10" (conv2d:in:out:k:pad).
ModelSpec parse_model_spec(std::string_view text, const Shape& input_shape, std::size_t num_classes);
std::string format_layers(const ModelSpec& spec);

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered, uniquely named learnable tensors.
template <class T>
class ParamSet {
 public:
  ParamSet() = default;

  void add(std::string name, Tensor<T> tensor);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const NamedTensor<T>& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<NamedTensor<T>>& entries() const noexcept { return entries_; }
  std::vector<Tensor<T>> tensors() const;
  std::vector<std::string> names() const;
  /// Total number of scalar parameters.
  std::size_t numel() const;
  /// Same names, new tensors (shapes must match).
  ParamSet with_tensors(const std::vector<Tensor<T>>& tensors) const;

 private:
  std::vector<NamedTensor<T>> entries_;
};

enum class InitScheme { kaiming, xavier, orthogonal, trunc_normal };

InitScheme parse_init_scheme(std::string_view name);
const char* init_scheme_name(InitScheme scheme);

/// Weights drawn per scheme from a generator seeded with `seed`; biases zero.
template <class T>
ParamSet<T> build_params(const ModelSpec& spec, InitScheme scheme, std::uint64_t seed);

/// [B, num_classes] logits for inputs of shape [B, input_shape...].
template <class T>
Tensor<T> forward_logits(const ModelSpec& spec, const ParamSet<T>& params, const Tensor<T>& inputs);

/// Mean softmax cross-entropy over the batch.
template <class T>
Tensor<T> forward_loss(const ModelSpec& spec, const ParamSet<T>& params, const Tensor<T>& inputs,
                       std::span<const int> labels);

}  // namespace nio
