// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

// Gradient cosine (GC) and gradient norm (GN) over per-sample or per-sub-batch
// gradients.

#pragma once

#include <string>
#include <vector>

#include "nio/datasets.hpp"
#include "nio/models.hpp"
#include "nio/tensor.hpp"

namespace nio {

/// Norms below this count as zero: their cosine terms contribute 0.
inline constexpr double kNormEpsilon = 1e-12;

/// 1-based inclusive sample range.
struct IndexRange {
  std::size_t first;
  std::size_t last;
};

struct SubBatchPlan {
  std::size_t batch_size = 0;     // B
  std::size_t sub_batches = 0;    // D
  double overlap = 0.0;           // r
  std::size_t sub_batch_size = 0; // N = ceil(B / (D - r))
  std::vector<IndexRange> ranges;
};

/// Splits a batch of B samples into D sub-batches of N samples overlapping by
/// ratio r. Sub-batch d starts at floor(N (d-1) (1-r)) + 1; a range running
/// past B is shifted left to end at B.
SubBatchPlan split_batch(std::size_t batch_size, std::size_t sub_batches, double overlap);

/// D = B, r = 0: one sample per sub-batch.
SubBatchPlan samplewise_plan(std::size_t batch_size);

/// One flattened gradient per sub-batch: the gradient of the mean loss over
/// the sub-batch, in parameter order. If the parameters are recorded on a tape
/// and create_graph is set, the gradients are themselves differentiable.
template <class T>
std::vector<Tensor<T>> sample_gradients(const ModelSpec& spec, const ParamSet<T>& params, const Batch<T>& batch,
                                        const SubBatchPlan& plan, bool create_graph);

template <class T>
struct CosineNorm {
  Tensor<T> gc;  // mean of the full D x D cosine grid, diagonal included
  Tensor<T> gn;  // mean L2 norm
  double g_max = 0.0;
  double g_min = 0.0;
};

/// GC and GN as recorded scalars (differentiable when the gradients are).
template <class T>
CosineNorm<T> cosine_and_norm(const std::vector<Tensor<T>>& grads);

double grad_cosine(const std::vector<std::vector<double>>& grads);
double grad_norm_avg(const std::vector<std::vector<double>>& grads);

struct LayerMetrics {
  std::string name;
  double gc = 0.0;
  double norm_ratio = 0.0;  // max_d |slice| / max(min_d |slice|, eps)
};

struct GradReport {
  std::vector<std::vector<double>> grads;
  double gn = 0.0;
  double gc = 0.0;
  double g_max = 0.0;
  double g_min = 0.0;
  std::vector<LayerMetrics> per_layer;
};

/// Metrics are accumulated in double regardless of T.
template <class T>
GradReport metric_report(const ModelSpec& spec, const ParamSet<T>& params, const Batch<T>& batch,
                         const SubBatchPlan& plan);

/// {"gn", "gc", "g_max", "g_min", "per_layer": {name: {"gc", "norm_ratio"}}}
std::string report_to_json(const GradReport& report);
/// layer,gc,norm_ratio
std::string report_to_csv(const GradReport& report);

}  // namespace nio
