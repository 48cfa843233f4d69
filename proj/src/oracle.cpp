// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nio/error.hpp"

namespace nio::oracle {

namespace {

double norm2(const Vec& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double dist2_sq(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
  return acc;
}

double cosine(const Vec& a, const Vec& b, double na, double nb) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc / (na * nb);
}

Vec minus(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

// H a^2 / n * sum_{i,j} (a / b - cos(v_i, v_j)) over path vectors v_i.
double theta_from_paths(const std::vector<Vec>& paths, double h, double scale) {
  const std::size_t n = paths.size();
  Vec norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    norms[i] = norm2(paths[i]);
    if (norms[i] == 0.0) {
      throw Error(ErrorCode::numeric, "degenerate landscape: optimum " + std::to_string(i) + " equals theta0");
    }
  }
  const double alpha = *std::max_element(norms.begin(), norms.end());
  const double beta = *std::min_element(norms.begin(), norms.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += alpha / beta - (paths[i] == paths[j] ? 1.0 : std::min(1.0, cosine(paths[i], paths[j], norms[i], norms[j])));
  const double a = alpha * scale;
  return h * a * a / static_cast<double>(n) * total;
}

}  // namespace

double QuadLandscape::H() const {
  if (curvatures.empty()) throw Error(ErrorCode::invalid_argument, "landscape has no samples");
  return *std::max_element(curvatures.begin(), curvatures.end());
}

void QuadLandscape::validate() const {
  if (optima.empty()) throw Error(ErrorCode::invalid_argument, "landscape has no samples");
  if (curvatures.size() != optima.size()) throw Error(ErrorCode::invalid_argument, "one curvature per optimum required");
  if (theta0.empty()) throw Error(ErrorCode::invalid_argument, "landscape dimension must be positive");
  for (const auto& o : optima) {
    if (o.size() != theta0.size()) throw Error(ErrorCode::shape_mismatch, "optimum dimension differs from theta0");
  }
  for (double a : curvatures) {
    if (!(a > 0.0) || !std::isfinite(a)) throw Error(ErrorCode::invalid_argument, "curvatures must be positive");
  }
  if (eta < 0.0) throw Error(ErrorCode::invalid_argument, "eta must be non-negative");
}

double sample_loss(const QuadLandscape& l, std::size_t i, const Vec& theta) {
  return 0.5 * l.curvatures.at(i) * dist2_sq(theta, l.optima.at(i));
}

double training_loss(const QuadLandscape& l, const Vec& theta) {
  l.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < l.n(); ++i) acc += sample_loss(l, i, theta);
  return acc / static_cast<double>(l.n());
}

double psi(const QuadLandscape& l) {
  l.validate();
  double total = 0.0;
  for (const auto& a : l.optima) {
    for (const auto& b : l.optima) {
      for (std::size_t k = 0; k < a.size(); ++k) total += std::abs(a[k] - b[k]);
    }
  }
  const double n = static_cast<double>(l.n());
  return std::sqrt(l.H()) / (n * n) * total;
}

double theta_exact(const QuadLandscape& l) {
  l.validate();
  std::vector<Vec> paths;
  for (const auto& o : l.optima) paths.push_back(minus(o, l.theta0));
  return theta_from_paths(paths, l.H(), 1.0);
}

Vec overall_optimum(const QuadLandscape& l) {
  l.validate();
  Vec out(l.dim(), 0.0);
  double weight = 0.0;
  for (std::size_t i = 0; i < l.n(); ++i) {
    weight += l.curvatures[i];
    for (std::size_t k = 0; k < l.dim(); ++k) out[k] += l.curvatures[i] * l.optima[i][k];
  }
  for (double& x : out) x /= weight;
  return out;
}

Theorem2Result theorem2_check(const QuadLandscape& l) {
  Theorem2Result r;
  r.L = training_loss(l, overall_optimum(l));
  r.Theta = theta_exact(l);
  r.holds = r.L <= r.Theta + 1e-12;
  return r;
}

FirstOrderGap first_order_gap(const QuadLandscape& l) {
  l.validate();
  std::vector<Vec> grads;
  for (std::size_t i = 0; i < l.n(); ++i) {
    Vec g = minus(l.theta0, l.optima[i]);
    for (double& x : g) x *= l.curvatures[i];
    grads.push_back(std::move(g));
  }
  FirstOrderGap r;
  r.exact = theta_exact(l);
  // Descent directions -g_i share the pairwise cosines of g_i.
  r.approx = theta_from_paths(grads, l.H(), l.step());
  r.gap = std::abs(r.exact - r.approx) / std::max(r.exact, 1e-12);
  return r;
}

QuadLandscape random_landscape(std::mt19937_64& rng, const LandscapeSampler& sampler) {
  std::uniform_int_distribution<std::size_t> n_dist(1, sampler.max_n);
  std::uniform_int_distribution<std::size_t> d_dist(1, sampler.max_dim);
  std::uniform_real_distribution<double> log_a(std::log(sampler.min_curvature), std::log(sampler.max_curvature));
  std::normal_distribution<double> normal(0.0, 1.0);
  QuadLandscape l;
  const std::size_t n = n_dist(rng);
  const std::size_t d = d_dist(rng);
  l.theta0.resize(d);
  for (double& x : l.theta0) x = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    Vec o(d);
    for (double& x : o) x = normal(rng);
    l.optima.push_back(std::move(o));
    l.curvatures.push_back(std::exp(log_a(rng)));
  }
  return l;
}

std::vector<SweepRow> theorem2_sweep(std::size_t instances, std::uint64_t seed, const LandscapeSampler& sampler) {
  std::mt19937_64 rng(seed);
  std::vector<SweepRow> rows;
  rows.reserve(instances);
  for (std::size_t id = 0; id < instances; ++id) {
    QuadLandscape l = random_landscape(rng, sampler);
    if (id == 0) {
      for (auto& o : l.optima) o = l.optima.front();
    }
    const auto t2 = theorem2_check(l);
    rows.push_back({id, l.n(), l.dim(), t2.L, t2.Theta, psi(l), t2.holds, first_order_gap(l).gap});
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "id,n,dim,L,Theta,Psi,holds,gap\n";
  for (const auto& r : rows) {
    os << r.id << ',' << r.n << ',' << r.dim << ',' << r.L << ',' << r.Theta << ',' << r.Psi << ','
       << (r.holds ? 1 : 0) << ',' << r.gap << '\n';
  }
  return os.str();
}

Theorem3Result theorem3_check(const GaussianOptimaInstance& inst, std::size_t trials, std::uint64_t seed) {
  const std::size_t d = inst.mean.size();
  if (d == 0 || inst.theta0.size() != d) throw Error(ErrorCode::invalid_argument, "mean and theta0 must share a positive dimension");
  if (inst.n == 0 || trials == 0 || inst.population_draws == 0) {
    throw Error(ErrorCode::invalid_argument, "theorem3_check needs positive n, trials and draws");
  }
  if (!(inst.delta > 0.0 && inst.delta <= 1.0)) throw Error(ErrorCode::invalid_argument, "delta must lie in (0, 1]");
  if (!(inst.spread >= 0.0) || !(inst.curvature > 0.0)) throw Error(ErrorCode::invalid_argument, "invalid spread or curvature");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    Vec v(d);
    for (std::size_t k = 0; k < d; ++k) v[k] = inst.mean[k] + inst.spread * normal(rng);
    return v;
  };
  Theorem3Result r;
  r.trials = trials;
  const double s2 = inst.spread * inst.spread;
  for (std::size_t t = 0; t < trials; ++t) {
    QuadLandscape l;
    l.theta0 = inst.theta0;
    for (std::size_t i = 0; i < inst.n; ++i) {
      l.optima.push_back(draw());
      l.curvatures.push_back(inst.curvature);
    }
    const Vec opt = overall_optimum(l);
    double theta = 0.0;
    if (inst.spread == 0.0 && std::all_of(l.optima.begin(), l.optima.end(), [&](const Vec& o) { return o == l.theta0; })) {
      theta = 0.0;
    } else {
      theta = theta_exact(l);
    }
    double pop = 0.0;
    for (std::size_t u = 0; u < inst.population_draws; ++u) pop += 0.5 * inst.curvature * dist2_sq(opt, draw());
    pop /= static_cast<double>(inst.population_draws);
    const double sigma2 = 2.0 * static_cast<double>(d) * s2 * s2 + 4.0 * s2 * dist2_sq(opt, inst.mean);
    const double bound = theta + std::sqrt(sigma2) / std::sqrt(static_cast<double>(inst.n) * inst.delta);
    if (pop > bound) ++r.violations;
    r.mean_population_loss += pop;
    r.mean_bound += bound;
  }
  r.rate = static_cast<double>(r.violations) / static_cast<double>(trials);
  r.mean_population_loss /= static_cast<double>(trials);
  r.mean_bound /= static_cast<double>(trials);
  return r;
}

}  // namespace nio::oracle
