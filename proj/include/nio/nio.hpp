// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

// Neural initialization optimization: learns one positive scale per parameter
// tensor by ascending GC + GN over sub-batch gradients, descending GN instead
// while the largest sub-batch gradient norm exceeds gamma.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nio/datasets.hpp"
#include "nio/gradmetrics.hpp"
#include "nio/models.hpp"

namespace nio {

/// One coefficient per ParamSet entry, in ParamSet order.
struct ScaleSet {
  std::vector<double> coeffs;

  static ScaleSet ones(std::size_t count) { return {std::vector<double>(count, 1.0)}; }
  std::size_t size() const noexcept { return coeffs.size(); }
};

enum class GradientMode { double_backward, finite_difference };
enum class Branch { constrain, ascend };

const char* branch_name(Branch b);
GradientMode parse_gradient_mode(std::string_view name);

/// gamma for a class count: base * ln(classes) / ln(10).
double default_gamma(std::size_t num_classes, double base = 3.0);

struct NIOConfig {
  double tau = 0.05;
  double gamma = 3.0;
  double alpha_lb = 0.01;
  std::size_t iterations = 0;  // 0: one pass over the dataset, ceil(size / B)
  std::size_t batch_size = 64;
  std::size_t sub_batches = 2;
  double overlap = 0.6;
  std::uint64_t seed = 0;
  GradientMode gradient_mode = GradientMode::double_backward;
  double fd_step = 1e-5;
  std::size_t snapshot_every = 10;  // 0 disables coefficient snapshots

  /// Throws on out-of-range values.
  void validate() const;
  std::size_t resolved_iterations(std::size_t dataset_size) const;
};

struct NIORecord {
  std::size_t iter = 0;  // 1-based
  double gc = 0.0;
  double gn = 0.0;
  double g_max = 0.0;
  Branch branch = Branch::ascend;
  double min_coeff = 0.0;  // after the step and clamp
  std::optional<std::vector<double>> snapshot;
};

struct NIOTrace {
  std::vector<NIORecord> records;

  /// iter,gc,gn,g_max,branch
  std::string to_csv() const;
  /// iter,<tensor names...> for snapshot iterations.
  std::string snapshots_csv(const std::vector<std::string>& names) const;
};

/// omega_k * W_k for each entry. With taped scale tensors the result is
/// recorded so gradients reach the scales.
template <class T>
ParamSet<T> rectify(const ParamSet<T>& params, const std::vector<Tensor<T>>& scales);
template <class T>
ParamSet<T> rectify(const ParamSet<T>& params, const ScaleSet& scales);

template <class T>
struct ObjectiveTerms {
  Tensor<T> gc;
  Tensor<T> gn;
  double g_max = 0.0;
  double g_min = 0.0;
};

/// B-GC and B-GN of the rectified parameters. When the scales are recorded on
/// a tape both terms are differentiable with respect to them.
template <class T>
ObjectiveTerms<T> objective(const ModelSpec& spec, const ParamSet<T>& params, const std::vector<Tensor<T>>& scales,
                            const Batch<T>& batch, const SubBatchPlan& plan);

struct ObjectiveGradient {
  double gc = 0.0;
  double gn = 0.0;
  double g_max = 0.0;
  Branch branch = Branch::ascend;
  /// d GN / d omega on the constrain branch, d (GC + GN) / d omega otherwise.
  std::vector<double> grad;
};

/// Objective values and the gradient the step needs, by double backward or
/// central differences per config.gradient_mode.
template <class T>
ObjectiveGradient objective_gradient(const ModelSpec& spec, const ParamSet<T>& params, const ScaleSet& scales,
                                     const Batch<T>& batch, const SubBatchPlan& plan, const NIOConfig& config);

/// Gradient of the chosen target (GN alone, or GC + GN) by central differences.
template <class T>
std::vector<double> objective_gradient_fd(const ModelSpec& spec, const ParamSet<T>& params, const ScaleSet& scales,
                                          const Batch<T>& batch, const SubBatchPlan& plan, bool gn_only,
                                          double step);

/// omega - tau * grad if g_max > gamma, omega + tau * grad otherwise; then
/// clamped below at alpha_lb.
ScaleSet nio_step(const ScaleSet& scales, const std::vector<double>& grad, double g_max, const NIOConfig& config);

template <class T>
struct NIOResult {
  ParamSet<T> rectified;
  ScaleSet scales;
  NIOTrace trace;
};

/// Runs the configured number of iterations on fresh shuffled batches.
template <class T>
NIOResult<T> nio_run(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data, const NIOConfig& config);

}  // namespace nio
