// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic convex landscapes with per-sample losses
//   loss_i(theta) = a_i / 2 * |theta - opt_i|^2
// on which the optima density Psi, the cosine quantity Theta and its bounds
// can be evaluated exactly.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace nio::oracle {

using Vec = std::vector<double>;

struct QuadLandscape {
  std::vector<Vec> optima;  // n points of equal dimension
  Vec curvatures;           // a_i > 0
  Vec theta0;
  double eta = 0.0;  // first-order step; 0 means 1 / H

  std::size_t n() const noexcept { return optima.size(); }
  std::size_t dim() const noexcept { return theta0.size(); }
  /// Smoothness bound: the largest curvature.
  double H() const;
  double step() const { return eta > 0.0 ? eta : 1.0 / H(); }
  /// Throws on empty or inconsistent data and non-positive curvatures.
  void validate() const;
};

double sample_loss(const QuadLandscape& l, std::size_t i, const Vec& theta);
/// Mean of the per-sample losses.
double training_loss(const QuadLandscape& l, const Vec& theta);

/// sqrt(H) / n^2 * sum_{i,j} |opt_i - opt_j|_1
double psi(const QuadLandscape& l);

/// H alpha^2 / n * sum_{i,j} (alpha / beta - cos(opt_i - theta0, opt_j - theta0))
/// with alpha, beta the largest and smallest |opt_i - theta0|. Throws when some
/// optimum equals theta0.
double theta_exact(const QuadLandscape& l);

/// sum a_i opt_i / sum a_i.
Vec overall_optimum(const QuadLandscape& l);

struct Theorem2Result {
  double L = 0.0;
  double Theta = 0.0;
  bool holds = false;
};

/// Training loss at the overall optimum against Theta (tolerance 1e-12).
Theorem2Result theorem2_check(const QuadLandscape& l);

struct FirstOrderGap {
  double exact = 0.0;
  double approx = 0.0;
  double gap = 0.0;
};

/// Theta rebuilt from the gradients g_i = a_i (theta0 - opt_i) after one step
/// of size eta: H (eta g_max)^2 / n * sum (g_max / g_min - cos(g_i, g_j)).
/// gap = |exact - approx| / max(exact, 1e-12).
FirstOrderGap first_order_gap(const QuadLandscape& l);

struct LandscapeSampler {
  std::size_t max_n = 8;
  std::size_t max_dim = 16;
  double min_curvature = 0.1;
  double max_curvature = 10.0;
};

/// n and dim uniform in [1, max], optima and theta0 standard normal,
/// curvatures log-uniform in [min, max].
QuadLandscape random_landscape(std::mt19937_64& rng, const LandscapeSampler& sampler = {});

struct SweepRow {
  std::size_t id = 0;
  std::size_t n = 0;
  std::size_t dim = 0;
  double L = 0.0;
  double Theta = 0.0;
  double Psi = 0.0;
  bool holds = false;
  double gap = 0.0;
};

/// Random landscapes checked with theorem2_check. Instance 0 has coincident
/// optima (the tight case).
std::vector<SweepRow> theorem2_sweep(std::size_t instances, std::uint64_t seed, const LandscapeSampler& sampler = {});
/// id,n,dim,L,Theta,Psi,holds,gap
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Training and held-out optima drawn from N(mean, spread^2 I); every sample
/// has curvature `curvature`.
struct GaussianOptimaInstance {
  std::size_t n = 16;
  Vec mean;
  double spread = 1.0;
  double curvature = 1.0;
  Vec theta0;
  double delta = 0.1;
  std::size_t population_draws = 4096;
};

struct Theorem3Result {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double rate = 0.0;
  double mean_population_loss = 0.0;
  double mean_bound = 0.0;
};

/// Per trial: draws a training set, forms the overall optimum, estimates the
/// population loss from fresh draws, and compares it with
/// Theta + sigma / sqrt(n delta), where sigma^2 is the exact variance of
/// |opt* - opt_u|^2 for the Gaussian optima.
Theorem3Result theorem3_check(const GaussianOptimaInstance& inst, std::size_t trials, std::uint64_t seed);

}  // namespace nio::oracle
