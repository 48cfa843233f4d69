// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

namespace nio {

Shape Dataset::sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }

template <class T>
Batch<T> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::invalid_argument, "empty batch");
  const std::size_t row = data.inputs.numel() / data.size();
  const auto src = data.inputs.values();
  std::vector<T> values;
  values.reserve(row * indices.size());
  Batch<T> batch;
  batch.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= data.size()) throw Error(ErrorCode::invalid_argument, "sample index out of range");
    const auto begin = src.begin() + static_cast<std::ptrdiff_t>(i * row);
    std::transform(begin, begin + static_cast<std::ptrdiff_t>(row), std::back_inserter(values),
                   [](float v) { return static_cast<T>(v); });
    batch.labels.push_back(data.labels[i]);
  }
  Shape shape = data.inputs.shape();
  shape[0] = indices.size();
  batch.inputs = Tensor<T>(std::move(shape), std::move(values));
  return batch;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Batch<float> b = make_batch<float>(data, indices);
  return Dataset{std::move(b.inputs), std::move(b.labels), data.num_classes};
}

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : dataset_size_(dataset_size), batch_size_(batch_size), rng_(seed) {
  if (dataset_size == 0 || batch_size == 0) {
    throw Error(ErrorCode::invalid_argument, "batch iterator needs a non-empty dataset and a positive batch size");
  }
  order_.resize(dataset_size);
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  position_ = 0;
}

std::vector<std::size_t> BatchIterator::next() {
  std::vector<std::size_t> out;
  out.reserve(batch_size_);
  while (out.size() < batch_size_) {
    if (position_ == dataset_size_) {
      reshuffle();
      ++epoch_;
    }
    out.push_back(order_[position_++]);
  }
  return out;
}

Dataset gen_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double spread, std::uint64_t seed) {
  if (classes < 2) throw Error(ErrorCode::invalid_argument, "gen_blobs needs at least 2 classes");
  if (per_class == 0) throw Error(ErrorCode::invalid_argument, "gen_blobs needs at least one sample per class");
  if (dim < classes) throw Error(ErrorCode::invalid_argument, "gen_blobs needs dim >= classes");
  if (!(spread >= 0)) throw Error(ErrorCode::invalid_argument, "gen_blobs spread must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = classes * per_class;
  std::vector<float> values(n * dim);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    labels[i] = static_cast<int>(label);
    for (std::size_t j = 0; j < dim; ++j) {
      const double center = j == label ? 1.0 : 0.0;
      values[i * dim + j] = static_cast<float>(center + spread * normal(rng));
    }
  }
  return Dataset{Tensor<float>({n, dim}, std::move(values)), std::move(labels), classes};
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& path) {
  if (offset + 4 > bytes.size()) throw Error(ErrorCode::format, path + ": truncated file");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  if (read_be32(images, 0, images_path) != 0x00000803u) throw Error(ErrorCode::format, images_path + ": bad magic");
  if (read_be32(labels, 0, labels_path) != 0x00000801u) throw Error(ErrorCode::format, labels_path + ": bad magic");
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw Error(ErrorCode::format, "count mismatch: " + std::to_string(count) + " images vs " +
                                       std::to_string(label_count) + " labels");
  }
  if (count == 0 || rows == 0 || cols == 0) throw Error(ErrorCode::format, images_path + ": empty image set");
  const std::size_t pixels = count * rows * cols;
  if (images.size() < 16 + pixels) throw Error(ErrorCode::format, images_path + ": truncated file");
  if (labels.size() < 8 + count) throw Error(ErrorCode::format, labels_path + ": truncated file");

  std::vector<float> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = static_cast<float>(images[16 + i]) / 255.0f;
  std::vector<int> out_labels(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    out_labels[i] = labels[8 + i];
    max_label = std::max(max_label, out_labels[i]);
  }
  const std::size_t classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return Dataset{Tensor<float>({count, 1, rows, cols}, std::move(values)), std::move(out_labels), classes};
}

Dataset load_cifar10_bin(const std::vector<std::string>& paths, bool normalize) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = 1 + kPixels;
  if (paths.empty()) throw Error(ErrorCode::invalid_argument, "no CIFAR-10 files given");
  std::vector<float> values;
  std::vector<int> labels;
  for (const auto& path : paths) {
    const auto bytes = read_file(path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw Error(ErrorCode::format, path + ": size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
    }
    for (std::size_t r = 0; r < bytes.size() / kRecord; ++r) {
      const unsigned char* rec = bytes.data() + r * kRecord;
      if (rec[0] >= 10) throw Error(ErrorCode::format, path + ": label out of range");
      labels.push_back(rec[0]);
      for (std::size_t p = 0; p < kPixels; ++p) {
        float v = static_cast<float>(rec[1 + p]) / 255.0f;
        if (normalize) {
          const std::size_t c = p / 1024;
          v = (v - kCifarMean[c]) / kCifarStd[c];
        }
        values.push_back(v);
      }
    }
  }
  const std::size_t n = labels.size();
  return Dataset{Tensor<float>({n, 3, 32, 32}, std::move(values)), std::move(labels), 10};
}

template Batch<float> make_batch(const Dataset&, std::span<const std::size_t>);
template Batch<double> make_batch(const Dataset&, std::span<const std::size_t>);

}  // namespace nio
