// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "nio/tensor.hpp"

using nio::Tape;
using TensorD = nio::Tensor<double>;

namespace {

TensorD vec(std::vector<double> v) {
  const auto n = v.size();
  return TensorD({n}, std::move(v));
}

TensorD random_tensor(std::mt19937_64& rng, nio::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(nio::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return TensorD(std::move(shape), std::move(v));
}

// Keeps points away from the relu kink so central differences stay valid.
TensorD random_off_kink(std::mt19937_64& rng, nio::Shape shape) {
  TensorD t = random_tensor(rng, shape);
  std::vector<double> v(t.values().begin(), t.values().end());
  for (auto& x : v) {
    if (std::abs(x) < 1e-3) x += 0.01;
  }
  return TensorD(std::move(shape), std::move(v));
}

using Fn = std::function<TensorD(const std::vector<TensorD>&)>;

}  // namespace

TEST_CASE("elementwise and reduction values") {
  const auto r = nio::relu(vec({-1, 0, 2}));
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) == std::vector<double>{0, 0, 2});
  CHECK(nio::l2norm(vec({3, 4})).item() == 5.0);
  CHECK(nio::dot(vec({1, 0}), vec({0, 1})).item() == 0.0);
  CHECK(nio::sum(vec({1, 2, 3})).item() == 6.0);
  CHECK(nio::mean(vec({1, 2, 3})).item() == 2.0);

  const TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  const TensorD b({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = nio::matmul(a, b);
  CHECK(c.shape() == nio::Shape{2, 2});
  CHECK(std::vector<double>(c.values().begin(), c.values().end()) == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("conv2d matches a direct loop") {
  std::mt19937_64 rng(3);
  const TensorD x = random_tensor(rng, {2, 2, 5, 4});
  const TensorD w = random_tensor(rng, {3, 2, 3, 3});
  const std::size_t pad = 1;
  const auto y = nio::conv2d(x, w, pad);
  REQUIRE(y.shape() == nio::Shape{2, 3, 5, 4});
  double worst = 0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(i + ky) - 1, ix = static_cast<long>(j + kx) - 1;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
                acc += x.at(((b * 2 + c) * 5 + iy) * 4 + ix) * w.at(((o * 2 + c) * 3 + ky) * 3 + kx);
              }
          worst = std::max(worst, std::abs(acc - y.at(((b * 3 + o) * 5 + i) * 4 + j)));
        }
  CHECK(worst < 1e-12);
}

TEST_CASE("first and second derivative of x*x") {
  Tape<double> tape;
  const auto x = tape.variable(TensorD::scalar(3.0));
  const auto y = nio::mul(x, x);
  const auto g = nio::backward(y, {x}, true);
  CHECK(g[0].item() == 6.0);
  REQUIRE(g[0].on_tape());
  const auto gg = nio::backward(g[0], {x});
  CHECK(gg[0].item() == 2.0);
  CHECK(tape.backward_passes() == std::vector<bool>{true, false});
}

TEST_CASE("cosine gradient agrees with central differences") {
  auto cosine = [](const TensorD& u, const TensorD& v) {
    return nio::div(nio::dot(u, v), nio::mul(nio::l2norm(u), nio::l2norm(v)));
  };
  Tape<double> tape;
  const auto u = tape.variable(vec({1, 0}));
  const auto v = tape.variable(vec({1, 1}));
  const auto grads = nio::backward(cosine(u, v), {u, v});

  // Plain-arithmetic oracle.
  auto plain = [](double u0, double u1, double v0, double v1) {
    return (u0 * v0 + u1 * v1) / (std::hypot(u0, u1) * std::hypot(v0, v1));
  };
  const double h = 1e-5;
  const double point[4] = {1, 0, 1, 1};
  for (int k = 0; k < 4; ++k) {
    double p[4], m[4];
    std::copy(point, point + 4, p);
    std::copy(point, point + 4, m);
    p[k] += h;
    m[k] -= h;
    const double fd = (plain(p[0], p[1], p[2], p[3]) - plain(m[0], m[1], m[2], m[3])) / (2 * h);
    const double analytic = k < 2 ? grads[0].at(k) : grads[1].at(k - 2);
    CHECK(std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-12) < 1e-6);
  }
}

TEST_CASE("grad_check on simple functions") {
  const Fn total = [](const std::vector<TensorD>& x) { return nio::sum(x[0]); };
  CHECK(nio::grad_check<double>(total, {vec({0.3, -2.0, 5.0})}, 1e-5) < 1e-9);

  const std::vector<int> label{2};
  const Fn xent = [&](const std::vector<TensorD>& x) {
    return nio::softmax_cross_entropy(nio::reshape(x[0], {1, 3}), label);
  };
  CHECK(nio::grad_check<double>(xent, {vec({0.5, -1.0, 2.0})}, 1e-5) < 1e-6);

  CHECK_THROWS_AS(nio::grad_check<double>(total, {vec({1.0})}, 0.0), nio::Error);
}

TEST_CASE("every op passes a first-order check at random points") {
  std::mt19937_64 rng(11);
  const std::vector<int> labels{0, 2, 1, 2};
  struct Case {
    const char* name;
    std::function<std::vector<TensorD>()> point;
    Fn f;
  };
  // Each op output is contracted with a fixed random tensor so that every
  // coordinate of the gradient is exercised.
  auto contract = [](const TensorD& y, std::uint64_t seed) {
    std::mt19937_64 local(seed);
    return nio::dot(y, random_tensor(local, y.shape()));
  };
  const std::vector<Case> cases = {
      {"add", [&] { return std::vector{random_tensor(rng, {3, 2}), random_tensor(rng, {3, 2})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::add(x[0], x[1]), 1); }},
      {"sub", [&] { return std::vector{random_tensor(rng, {4}), random_tensor(rng, {4})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::sub(x[0], x[1]), 2); }},
      {"mul", [&] { return std::vector{random_tensor(rng, {4}), random_tensor(rng, {4})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::mul(x[0], x[1]), 3); }},
      {"div", [&] { return std::vector{random_tensor(rng, {4}), random_tensor(rng, {4}, 0.5, 2.0)}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::div(x[0], x[1]), 4); }},
      {"mul_scalar", [&] { return std::vector{random_tensor(rng, {2, 3}), random_tensor(rng, {})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::mul_scalar(x[0], x[1]), 5); }},
      {"sqrt", [&] { return std::vector{random_tensor(rng, {5}, 0.2, 3.0)}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::sqrt(x[0]), 6); }},
      {"relu", [&] { return std::vector{random_off_kink(rng, {6})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::relu(x[0]), 7); }},
      {"tanh", [&] { return std::vector{random_tensor(rng, {6})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::tanh(x[0]), 8); }},
      {"reshape", [&] { return std::vector{random_tensor(rng, {2, 3})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::reshape(x[0], {3, 2}), 9); }},
      {"mean", [&] { return std::vector{random_tensor(rng, {2, 3})}; },
       [&](const std::vector<TensorD>& x) { return nio::mul(nio::mean(x[0]), nio::sum(x[0])); }},
      {"dot", [&] { return std::vector{random_tensor(rng, {5}), random_tensor(rng, {5})}; },
       [&](const std::vector<TensorD>& x) { return nio::dot(x[0], x[1]); }},
      {"l2norm", [&] { return std::vector{random_tensor(rng, {5})}; },
       [&](const std::vector<TensorD>& x) { return nio::l2norm(x[0]); }},
      {"matmul", [&] { return std::vector{random_tensor(rng, {5, 3}), random_tensor(rng, {3, 6})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::matmul(x[0], x[1]), 10); }},
      {"bias_add", [&] { return std::vector{random_tensor(rng, {2, 3, 2, 2}), random_tensor(rng, {3})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::bias_add(x[0], x[1]), 11); }},
      {"softmax_rows", [&] { return std::vector{random_tensor(rng, {3, 4})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::softmax_rows(x[0]), 12); }},
      {"softmax_cross_entropy", [&] { return std::vector{random_tensor(rng, {4, 3}, -2, 2)}; },
       [&](const std::vector<TensorD>& x) { return nio::softmax_cross_entropy(x[0], labels); }},
      {"conv2d", [&] { return std::vector{random_tensor(rng, {2, 2, 4, 3}), random_tensor(rng, {2, 2, 3, 3})}; },
       [&](const std::vector<TensorD>& x) { return contract(nio::conv2d(x[0], x[1], 1), 13); }},
      {"concat_slice",
       [&] { return std::vector{random_tensor(rng, {2, 2}), random_tensor(rng, {3})}; },
       [&](const std::vector<TensorD>& x) {
         const auto flat = nio::concat(std::vector{x[0], x[1]});
         return contract(nio::slice(flat, 1, {5}), 14);
       }},
  };
  for (const auto& c : cases) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, nio::grad_check<double>(c.f, c.point(), 1e-6));
    INFO(c.name);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("second-order gradients agree with differences of first-order gradients") {
  std::mt19937_64 rng(5);
  const TensorD weights = random_tensor(rng, {3, 4});
  const TensorD probe_dir = random_tensor(rng, {4, 2});
  const std::vector<int> labels{1, 0, 2, 2};
  // g(x): loss of a tiny tanh/relu network with input x; F(x) = <dg/dx, r>.
  auto inner = [&](const TensorD& x) {
    const auto h = nio::tanh(nio::matmul(x, probe_dir));          // [4,2]
    const auto z = nio::matmul(nio::relu(nio::scale(h, 2.0)), nio::reshape(nio::slice(weights, 0, {6}), {2, 3}));
    return nio::add(nio::softmax_cross_entropy(z, labels), nio::mul(nio::l2norm(x), nio::l2norm(x)));
  };
  const TensorD direction = random_tensor(rng, {4, 4});
  const Fn outer = [&](const std::vector<TensorD>& x) {
    if (x[0].on_tape()) {
      const auto g = nio::backward(inner(x[0]), {x[0]}, true);
      return nio::dot(g[0], direction);
    }
    nio::GradModeGuard on(true);
    Tape<double> local;
    const auto xv = local.variable(x[0]);
    const auto g = nio::backward(inner(xv), {xv});
    return nio::dot(g[0], direction);
  };
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    worst = std::max(worst, nio::grad_check<double>(outer, {random_tensor(rng, {4, 4})}, 1e-5));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(nio::add(vec({1, 2}), vec({1, 2, 3})), nio::Error);
  CHECK_THROWS_AS(nio::matmul(TensorD::zeros({2, 3}), TensorD::zeros({2, 3})), nio::Error);
  Tape<double> tape;
  const auto x = tape.variable(vec({1, 2}));
  const auto y = nio::scale(x, 2.0);
  try {
    nio::backward(y, {x});
    FAIL("expected a non-scalar error");
  } catch (const nio::Error& e) {
    CHECK(e.code() == nio::ErrorCode::shape_mismatch);
  }
  try {
    nio::backward(nio::sum(y), {vec({1, 2})});
    FAIL("expected not-on-tape");
  } catch (const nio::Error& e) {
    CHECK(e.code() == nio::ErrorCode::not_on_tape);
  }
  Tape<double> other;
  const auto z = other.variable(vec({1, 2}));
  CHECK_THROWS_AS(nio::add(x, z), nio::Error);
  CHECK_THROWS_AS(nio::softmax_cross_entropy(TensorD::zeros({1, 3}), std::vector<int>{3}), nio::Error);
}

TEST_CASE("zero-norm vectors have a zero gradient") {
  Tape<double> tape;
  const auto x = tape.variable(TensorD::zeros({3}));
  const auto g = nio::backward(nio::l2norm(x), {x});
  for (double v : g[0].values()) CHECK(v == 0.0);
  const auto s = tape.variable(TensorD::scalar(0.0));
  const auto gs = nio::backward(nio::sqrt(s), {s});
  CHECK(gs[0].item() == 0.0);
}

TEST_CASE("identical inputs give bit-identical results") {
  auto run = [] {
    std::mt19937_64 rng(42);
    const TensorD a = random_tensor(rng, {37, 53});
    const TensorD b = random_tensor(rng, {53, 29});
    Tape<double> tape;
    const auto av = tape.variable(a);
    const auto y = nio::sum(nio::tanh(nio::matmul(av, b)));
    const auto g = nio::backward(y, {av});
    std::vector<double> out(g[0].values().begin(), g[0].values().end());
    out.push_back(y.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("float tensors share the engine") {
  nio::Tape<float> tape;
  const auto x = tape.variable(nio::Tensor<float>::scalar(3.0f));
  const auto g = nio::backward(nio::mul(x, x), {x});
  CHECK(g[0].item() == 6.0f);
  CHECK(nio::dtype_of<float>::value == nio::DType::f32);
  CHECK(nio::parse_dtype("f64") == nio::DType::f64);
  CHECK_THROWS_AS(nio::parse_dtype("f16"), nio::Error);
}
