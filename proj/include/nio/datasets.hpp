// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nio/tensor.hpp"

namespace nio {

/// Labelled samples. inputs has shape [count, sample dims...].
struct Dataset {
  Tensor<float> inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  /// Per-sample shape (inputs shape without the leading count).
  Shape sample_shape() const;
};

template <class T>
struct Batch {
  Tensor<T> inputs;
  std::vector<int> labels;
};

/// Gathers the given sample indices into a batch of dtype T.
template <class T>
Batch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

/// Streams batches of a fixed size from consecutive epoch permutations. An
/// epoch's permutation is consumed in order, so every index appears exactly
/// once per epoch; a batch may straddle two epochs.
class BatchIterator {
 public:
  BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle();

  std::size_t dataset_size_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t position_ = 0;
  std::size_t epoch_ = 0;
};

/// Gaussian clusters around the basis vectors e_0 .. e_{classes-1} with the
/// given per-coordinate standard deviation. Sample i has label i % classes.
Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed);

/// IDX image file (magic 0x00000803) plus IDX label file (0x00000801).
/// Pixels are scaled to [0, 1]; samples have shape (1, rows, cols).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes (CHW).
/// With normalize, pixels in [0, 1] are standardized per channel.
Dataset load_cifar10_bin(const std::vector<std::string>& paths, bool normalize = true);

inline constexpr float kCifarMean[3] = {0.4914f, 0.4822f, 0.4465f};
inline constexpr float kCifarStd[3] = {0.2470f, 0.2435f, 0.2616f};

}  // namespace nio
