// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "nio/error.hpp"
#include "nio/oracle.hpp"

using namespace nio::oracle;

namespace {

QuadLandscape two_points() {
  QuadLandscape l;
  l.optima = {{1.0, 0.0}, {0.0, 1.0}};
  l.curvatures = {1.0, 1.0};
  l.theta0 = {0.0, 0.0};
  return l;
}

// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
std::vector<Vec> random_rotation(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> q;
  while (q.size() < d) {
    Vec v(d);
    for (double& x : v) x = normal(rng);
    for (const auto& u : q) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += v[k] * u[k];
      for (std::size_t k = 0; k < d; ++k) v[k] -= dot * u[k];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-6) continue;
    for (double& x : v) x /= n;
    q.push_back(v);
  }
  return q;
}

Vec rotate(const std::vector<Vec>& q, const Vec& v) {
  Vec out(v.size(), 0.0);
  for (std::size_t r = 0; r < q.size(); ++r)
    for (std::size_t k = 0; k < v.size(); ++k) out[r] += q[r][k] * v[k];
  return out;
}

}  // namespace

TEST_CASE("psi and theta on the two-point landscape") {
  const auto l = two_points();
  CHECK(psi(l) == Catch::Approx(1.0).margin(1e-15));
  CHECK(theta_exact(l) == Catch::Approx(1.0).margin(1e-15));
  const auto opt = overall_optimum(l);
  CHECK(opt == Vec{0.5, 0.5});
  const auto t2 = theorem2_check(l);
  CHECK(t2.L == Catch::Approx(0.25).margin(1e-15));
  CHECK(t2.Theta == Catch::Approx(1.0).margin(1e-15));
  CHECK(t2.holds);
}

TEST_CASE("coincident optima are the tight case") {
  QuadLandscape l;
  l.optima = {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  l.curvatures = {0.5, 2.0, 7.0};
  l.theta0 = {0.0, 0.0};
  CHECK(psi(l) == 0.0);
  CHECK(theta_exact(l) == Catch::Approx(0.0).margin(1e-15));
  const auto t2 = theorem2_check(l);
  CHECK(t2.L == 0.0);
  CHECK(t2.holds);
}

TEST_CASE("overall optimum examples") {
  QuadLandscape one;
  one.optima = {{3.0, -1.0}};
  one.curvatures = {4.0};
  one.theta0 = {0.0, 0.0};
  CHECK(overall_optimum(one) == Vec{3.0, -1.0});
  CHECK(training_loss(one, overall_optimum(one)) == 0.0);

  QuadLandscape w;
  w.optima = {{0.0}, {4.0}};
  w.curvatures = {3.0, 1.0};
  w.theta0 = {1.0};
  CHECK(overall_optimum(w)[0] == Catch::Approx(1.0));
}

TEST_CASE("degenerate and invalid landscapes") {
  auto l = two_points();
  l.theta0 = {1.0, 0.0};
  CHECK_THROWS_AS(theta_exact(l), nio::Error);
  l = two_points();
  l.curvatures = {1.0, 0.0};
  CHECK_THROWS_AS(psi(l), nio::Error);
  l = two_points();
  l.optima[1] = {1.0};
  CHECK_THROWS_AS(psi(l), nio::Error);
}

TEST_CASE("psi is translation invariant and theta rotation invariant") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    auto l = random_landscape(rng);
    auto shifted = l;
    for (auto& o : shifted.optima)
      for (std::size_t k = 0; k < o.size(); ++k) o[k] += 0.5 * static_cast<double>(k) - 1.0;
    CHECK(psi(shifted) == Catch::Approx(psi(l)).epsilon(1e-12));

    const auto q = random_rotation(rng, l.dim());
    auto rotated = l;
    for (std::size_t i = 0; i < l.n(); ++i) {
      Vec path(l.dim());
      for (std::size_t k = 0; k < l.dim(); ++k) path[k] = l.optima[i][k] - l.theta0[k];
      const auto r = rotate(q, path);
      for (std::size_t k = 0; k < l.dim(); ++k) rotated.optima[i][k] = l.theta0[k] + r[k];
    }
    CHECK(theta_exact(rotated) == Catch::Approx(theta_exact(l)).epsilon(1e-10));
    CHECK(psi(l) >= 0.0);
    CHECK(theta_exact(l) >= 0.0);
  }
}

TEST_CASE("loss at the overall optimum stays below Theta on random landscapes") {
  const auto rows = theorem2_sweep(500, 1);
  REQUIRE(rows.size() == 500);
  CHECK(rows[0].L == 0.0);
  CHECK(rows[0].Theta == Catch::Approx(0.0).margin(1e-12));
  for (const auto& r : rows) REQUIRE(r.holds);
  const auto csv = sweep_to_csv(rows);
  CHECK(csv.rfind("id,n,dim,L,Theta,Psi,holds,gap\n", 0) == 0);
  CHECK(sweep_to_csv(theorem2_sweep(500, 1)) == csv);
}

TEST_CASE("first-order approximation") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    auto l = random_landscape(rng);
    const double a = 0.1 + static_cast<double>(t) * 0.2;
    for (double& c : l.curvatures) c = a;
    const auto g = first_order_gap(l);
    CHECK(std::abs(g.exact - g.approx) <= 1e-10 * std::max(1.0, g.exact));

    // The cosine part does not depend on the step size.
    auto other = l;
    other.eta = 3.0;
    const auto h = first_order_gap(other);
    if (g.approx == 0.0) continue;
    const double ratio = h.approx / g.approx;
    CHECK(ratio == Catch::Approx(9.0 * a * a).epsilon(1e-10));
  }
  QuadLandscape mixed = two_points();
  mixed.curvatures = {1.0, 4.0};
  const auto g = first_order_gap(mixed);
  CHECK(g.gap > 0.0);
}

TEST_CASE("psi is blind to theta0, theta is not") {
  auto a = two_points();
  a.optima.push_back({1.0, 1.0});
  a.curvatures.push_back(1.0);
  auto b = a;
  b.theta0 = {-3.0, -3.0};
  CHECK(psi(a) == psi(b));
  CHECK(theta_exact(a) != Catch::Approx(theta_exact(b)).epsilon(1e-6));
}

TEST_CASE("population loss bound by Monte Carlo") {
  GaussianOptimaInstance inst;
  inst.mean = {2.0, -1.0, 0.5, 1.0};
  inst.theta0 = {0.0, 0.0, 0.0, 0.0};
  const auto r = theorem3_check(inst, 200, 3);
  CHECK(r.rate <= 0.13);
  CHECK(r.mean_population_loss > 0.0);

  auto degenerate = inst;
  degenerate.spread = 0.0;
  const auto d = theorem3_check(degenerate, 20, 3);
  CHECK(d.rate == 0.0);
  CHECK(d.mean_population_loss == 0.0);

  auto loose = inst;
  loose.delta = 1.0;
  CHECK(theorem3_check(loose, 50, 4).rate <= 1.0);
  loose.delta = 0.0;
  CHECK_THROWS_AS(theorem3_check(loose, 5, 1), nio::Error);
}
