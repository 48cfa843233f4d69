// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "nio/gradmetrics.hpp"

using namespace nio;

namespace {

std::vector<std::pair<std::size_t, std::size_t>> pairs(const SubBatchPlan& p) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& r : p.ranges) out.emplace_back(r.first, r.last);
  return out;
}

// Direct evaluation of the cosine grid without the tape.
double naive_gc(const std::vector<std::vector<double>>& g) {
  const std::size_t d = g.size();
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t k = 0; k < g[i].size(); ++k) {
        dot += g[i][k] * g[j][k];
        ni += g[i][k] * g[i][k];
        nj += g[j][k] * g[j][k];
      }
      if (std::sqrt(ni) < kNormEpsilon || std::sqrt(nj) < kNormEpsilon) continue;
      total += dot / (std::sqrt(ni) * std::sqrt(nj));
    }
  }
  return total / static_cast<double>(d * d);
}

Batch<double> blob_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
  const auto data = gen_blobs(4, (n + 3) / 4, dim, 0.5, seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return make_batch<double>(data, idx);
}

}  // namespace

TEST_CASE("split_batch worked examples") {
  const auto a = split_batch(128, 2, 0.0);
  CHECK(a.sub_batch_size == 64);
  CHECK(pairs(a) == decltype(pairs(a)){{1, 64}, {65, 128}});
  const auto b = split_batch(128, 2, 0.6);
  CHECK(b.sub_batch_size == 92);
  CHECK(pairs(b) == decltype(pairs(b)){{1, 92}, {37, 128}});
  const auto c = split_batch(4, 4, 0.0);
  CHECK(pairs(c) == decltype(pairs(c)){{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  CHECK(pairs(samplewise_plan(4)) == pairs(c));
}

TEST_CASE("split_batch ranges stay inside the batch") {
  for (std::size_t b = 1; b <= 64; ++b) {
    for (std::size_t d = 1; d <= b; ++d) {
      for (double r : {0.0, 0.25, 0.5, 0.6, 0.9}) {
        const double n = std::ceil(static_cast<double>(b) / (static_cast<double>(d) - r) - 1e-9);
        if (n > static_cast<double>(b)) {
          CHECK_THROWS_AS(split_batch(b, d, r), Error);
          continue;
        }
        const auto p = split_batch(b, d, r);
        REQUIRE(p.ranges.size() == d);
        for (const auto& rg : p.ranges) {
          CHECK(rg.first >= 1);
          CHECK(rg.last <= b);
          CHECK(rg.last - rg.first + 1 == p.sub_batch_size);
        }
      }
    }
  }
  CHECK_THROWS_AS(split_batch(3, 4, 0.0), Error);
  CHECK_THROWS_AS(split_batch(8, 2, 1.0), Error);
}

TEST_CASE("grad_cosine and grad_norm_avg examples") {
  CHECK(grad_cosine({{1, 0}, {1, 0}}) == Catch::Approx(1.0).margin(1e-15));
  CHECK(grad_cosine({{1, 0}, {0, 1}}) == Catch::Approx(0.5).margin(1e-15));
  CHECK(grad_cosine({{1, 0}, {-1, 0}}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(grad_norm_avg({{3, 0}, {0, 4}}) == Catch::Approx(3.5).margin(1e-15));
  CHECK(grad_norm_avg({{0, 0, 0}}) == 0.0);
  CHECK(grad_cosine({{0, 0}}) == 0.0);
  CHECK(grad_cosine({{0, 0}, {1, 1}}) == Catch::Approx(0.25).margin(1e-15));
  CHECK_THROWS_AS(grad_cosine({{1, 0}, {1, 0, 0}}), Error);
}

TEST_CASE("metric properties on random gradient sets") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dd(1, 8), nd(1, 12);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.01, 100.0);
  for (int t = 0; t < 300; ++t) {
    const std::size_t d = static_cast<std::size_t>(dd(rng));
    const std::size_t n = static_cast<std::size_t>(nd(rng));
    std::vector<std::vector<double>> g(d, std::vector<double>(n));
    for (auto& v : g) for (auto& x : v) x = normal(rng);
    const double gc = grad_cosine(g);
    const double gn = grad_norm_avg(g);
    CHECK(gc >= 2.0 / static_cast<double>(d) - 1.0 - 1e-12);
    CHECK(gc <= 1.0 + 1e-12);
    CHECK(gn >= 0.0);
    CHECK(std::abs(gc - naive_gc(g)) < 1e-12);

    auto scaled = g;
    for (auto& v : scaled) {
      const double c = pos(rng);
      for (auto& x : v) x *= c;
    }
    CHECK(std::abs(grad_cosine(scaled) - gc) < 1e-12);

    auto uniform = g;
    for (auto& v : uniform) for (auto& x : v) x *= 3.0;
    CHECK(grad_norm_avg(uniform) == Catch::Approx(3.0 * gn).epsilon(1e-12));

    auto rev = g;
    std::reverse(rev.begin(), rev.end());
    CHECK(std::abs(grad_cosine(rev) - gc) < 1e-12);
    CHECK(std::abs(grad_norm_avg(rev) - gn) < 1e-12);
  }
}

TEST_CASE("sub-batch gradient equals the mean of sample gradients") {
  const auto spec = parse_model_spec("flatten,linear:6:5,bias:5,relu,linear:5:4,bias:4", {6}, 4);
  const auto params = build_params<double>(spec, InitScheme::kaiming, 3);
  const auto batch = blob_batch(8, 6, 5);
  const auto singles = sample_gradients(spec, params, batch, samplewise_plan(8), false);
  const auto plan = split_batch(8, 2, 0.5);
  const auto subs = sample_gradients(spec, params, batch, plan, false);
  REQUIRE(subs.size() == 2);
  for (std::size_t d = 0; d < 2; ++d) {
    const auto& r = plan.ranges[d];
    for (std::size_t k = 0; k < subs[d].numel(); ++k) {
      double mean = 0.0;
      for (std::size_t i = r.first; i <= r.last; ++i) mean += singles[i - 1].values()[k];
      mean /= static_cast<double>(r.last - r.first + 1);
      REQUIRE(std::abs(mean - subs[d].values()[k]) < 1e-12);
    }
  }
}

TEST_CASE("single-sample gradient of a zero linear model") {
  const auto spec = parse_model_spec("flatten,linear:3:3,bias:3", {3}, 3);
  ParamSet<double> p;
  p.add("fc1.weight", Tensor<double>::zeros({3, 3}));
  p.add("fc1.bias", Tensor<double>::zeros({3}));
  Batch<double> b{Tensor<double>({1, 3}, {1.0, 2.0, 3.0}), {1}};
  const auto g = sample_gradients(spec, p, b, samplewise_plan(1), false);
  const auto v = g[0].values();
  // d loss / d bias = softmax - onehot
  CHECK(v[9] == Catch::Approx(1.0 / 3.0));
  CHECK(v[10] == Catch::Approx(-2.0 / 3.0));
  // d loss / d W[i][j] = x_i (softmax_j - onehot_j)
  CHECK(v[2 * 3 + 1] == Catch::Approx(3.0 * (-2.0 / 3.0)));
}

TEST_CASE("duplicated samples give identical sub-batch gradients") {
  const auto spec = make_mlp3({6}, 4, 8, 8);
  const auto params = build_params<double>(spec, InitScheme::kaiming, 3);
  const auto base = blob_batch(4, 6, 1);
  std::vector<double> x(base.inputs.values().begin(), base.inputs.values().begin() + 6);
  std::vector<double> twice = x;
  twice.insert(twice.end(), x.begin(), x.end());
  Batch<double> b{Tensor<double>({2, 6}, twice), {base.labels[0], base.labels[0]}};
  const auto g = sample_gradients(spec, params, b, split_batch(2, 2, 0.0), false);
  CHECK(std::ranges::equal(g[0].values(), g[1].values()));
  const auto rep = metric_report(spec, params, b, samplewise_plan(2));
  CHECK(rep.gc == Catch::Approx(1.0).margin(1e-12));
  CHECK(rep.g_max / rep.g_min == Catch::Approx(1.0).margin(1e-12));
  for (const auto& l : rep.per_layer) {
    if (rep.grads[0].size() == 0) continue;
    CHECK(l.norm_ratio == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("batch metrics reduce to sample-wise metrics") {
  const auto spec = make_mlp3({6}, 4, 8, 8);
  const auto params = build_params<double>(spec, InitScheme::kaiming, 9);
  const auto batch = blob_batch(8, 6, 2);
  const auto rep = metric_report(spec, params, batch, split_batch(8, 8, 0.0));
  std::vector<std::vector<double>> singles;
  for (std::size_t i = 0; i < 8; ++i) {
    std::vector<double> xi(batch.inputs.values().begin() + static_cast<std::ptrdiff_t>(i * 6),
                           batch.inputs.values().begin() + static_cast<std::ptrdiff_t>(i * 6 + 6));
    Batch<double> one{Tensor<double>({1, 6}, xi), {batch.labels[i]}};
    const auto g = sample_gradients(spec, params, one, samplewise_plan(1), false);
    singles.emplace_back(g[0].values().begin(), g[0].values().end());
  }
  CHECK(std::abs(rep.gc - naive_gc(singles)) < 1e-12);
  REQUIRE(rep.per_layer.size() == params.size());
  for (const auto& l : rep.per_layer) {
    CHECK(l.gc >= 2.0 / 8.0 - 1.0 - 1e-12);
    CHECK(l.gc <= 1.0 + 1e-12);
  }
}

TEST_CASE("report serialization") {
  const auto spec = make_mlp3({6}, 4, 8, 8);
  const auto params = build_params<double>(spec, InitScheme::kaiming, 9);
  const auto rep = metric_report(spec, params, blob_batch(8, 6, 2), split_batch(8, 2, 0.6));
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["gc"].get<double>() == rep.gc);
  CHECK(j["per_layer"].size() == params.size());
  CHECK(j["per_layer"].contains("fc1.weight"));
  const auto csv = report_to_csv(rep);
  CHECK(csv.rfind("layer,gc,norm_ratio\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(params.size() + 1));
}

TEST_CASE("float metrics track double metrics") {
  const auto spec = make_mlp3({6}, 4, 8, 8);
  const auto pd = build_params<double>(spec, InitScheme::kaiming, 9);
  const auto pf = build_params<float>(spec, InitScheme::kaiming, 9);
  const auto data = gen_blobs(4, 2, 6, 0.5, 2);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto rd = metric_report(spec, pd, make_batch<double>(data, idx), split_batch(8, 2, 0.6));
  const auto rf = metric_report(spec, pf, make_batch<float>(data, idx), split_batch(8, 2, 0.6));
  CHECK(rf.gc == Catch::Approx(rd.gc).epsilon(1e-4));
  CHECK(rf.gn == Catch::Approx(rd.gn).epsilon(1e-4));
}
