// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "nio/harness.hpp"

using namespace nio;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("nio_h_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& p, const std::string& bytes) { std::ofstream(p, std::ios::binary) << bytes; }

template <class T>
bool bit_equal(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].name != b[k].name || a[k].tensor.shape() != b[k].tensor.shape()) return false;
    const auto x = a[k].tensor.values();
    const auto y = b[k].tensor.values();
    if (std::memcmp(x.data(), y.data(), x.size() * sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  const auto spec = make_cnn4({1, 6, 6}, 3, 2, 3);
  const auto pd = build_params<double>(spec, InitScheme::kaiming, 1);
  save_checkpoint(pd, dir.file("d.nioc"));
  const auto ld = load_checkpoint(dir.file("d.nioc"));
  REQUIRE(std::holds_alternative<ParamSet<double>>(ld));
  CHECK(bit_equal(std::get<ParamSet<double>>(ld), pd));

  const auto pf = build_params<float>(spec, InitScheme::orthogonal, 2);
  save_checkpoint(pf, dir.file("f.nioc"));
  CHECK(bit_equal(std::get<ParamSet<float>>(load_checkpoint(dir.file("f.nioc"))), pf));
  CHECK(load_checkpoint_as<double>(dir.file("f.nioc"))[0].tensor.values()[0] == static_cast<double>(pf[0].tensor.values()[0]));
  CHECK_FALSE(fs::exists(dir.file("f.nioc.tmp")));
}

TEST_CASE("empty checkpoint") {
  TempDir dir;
  save_checkpoint(ParamSet<double>{}, dir.file("e.nioc"));
  CHECK(slurp(dir.file("e.nioc")).size() == 12);
  CHECK(std::get<ParamSet<float>>(load_checkpoint(dir.file("e.nioc"))).empty());
}

TEST_CASE("corrupted checkpoints") {
  TempDir dir;
  const auto spec = make_mlp3({4}, 2, 3, 3);
  save_checkpoint(build_params<double>(spec, InitScheme::kaiming, 1), dir.file("c.nioc"));
  const auto good = slurp(dir.file("c.nioc"));

  auto bad = good;
  bad[0] = 'X';
  dump(dir.file("m.nioc"), bad);
  CHECK_THROWS_WITH(load_checkpoint(dir.file("m.nioc")), Catch::Matchers::ContainsSubstring("bad magic"));

  bad = good;
  bad[4] = 2;
  dump(dir.file("v.nioc"), bad);
  CHECK_THROWS_WITH(load_checkpoint(dir.file("v.nioc")), Catch::Matchers::ContainsSubstring("version mismatch"));

  dump(dir.file("t.nioc"), good.substr(0, good.size() - 3));
  CHECK_THROWS_WITH(load_checkpoint(dir.file("t.nioc")), Catch::Matchers::ContainsSubstring("truncated"));
  CHECK_THROWS_AS(load_checkpoint(dir.file("missing.nioc")), Error);
}

TEST_CASE("key value config") {
  const auto kv = parse_kv_config("# comment\nmodel = mlp3\n\n tau=0.1  # trailing\ntau = 0.2\n");
  CHECK(kv.at("model") == "mlp3");
  CHECK(kv.at("tau") == "0.2");
  CHECK(kv.size() == 2);
  CHECK_THROWS_AS(parse_kv_config("novalue\n"), Error);
  CHECK_THROWS_AS(parse_kv_config(" = 3\n"), Error);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto data = gen_blobs(3, 10, 8, 0.3, 1);
  const auto spec = make_mlp3({8}, 3, 16, 8);
  const auto p = build_params<double>(spec, InitScheme::kaiming, 2);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const auto r = train(spec, p, data, nullptr, cfg);
  CHECK(bit_equal(r.params, p));
  REQUIRE(r.epochs.size() == 3);
  CHECK(r.epochs[0].loss == Catch::Approx(r.epochs[2].loss).epsilon(1e-12));
}

TEST_CASE("separable blobs are learned and training is deterministic") {
  const auto data = gen_blobs(4, 100, 64, 0.1, 3);
  const auto test = gen_blobs(4, 25, 64, 0.1, 4);
  const auto spec = make_mlp3({64}, 4);
  const auto p = build_params<float>(spec, InitScheme::kaiming, 5);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.seed = 9;
  const auto a = train(spec, p, data, &test, cfg);
  CHECK(a.epochs.size() == 20);
  double best = 0.0;
  for (const auto& e : a.epochs) best = std::max(best, e.train_accuracy);
  CHECK(best >= 0.99);
  CHECK(a.epochs.back().test_accuracy >= 0.99);
  const auto b = train(spec, p, data, &test, cfg);
  for (std::size_t e = 0; e < a.epochs.size(); ++e) CHECK(a.epochs[e].loss == b.epochs[e].loss);
}

TEST_CASE("divergence names the epoch") {
  const auto data = gen_blobs(2, 10, 4, 0.3, 1);
  const auto spec = parse_model_spec("flatten,linear:4:2,bias:2", {4}, 2);
  auto p = build_params<double>(spec, InitScheme::kaiming, 2);
  auto ts = p.tensors();
  ts[0] = scale(ts[0], std::numeric_limits<double>::quiet_NaN());
  TrainConfig cfg;
  cfg.epochs = 2;
  CHECK_THROWS_WITH(train(spec, p.with_tensors(ts), data, nullptr, cfg), Catch::Matchers::ContainsSubstring("epoch 1"));
}

TEST_CASE("diagnostics rows and identical batches") {
  const auto spec = make_mlp3({6}, 3, 5, 4);
  const auto p = build_params<double>(spec, InitScheme::kaiming, 2);
  const auto data = gen_blobs(3, 10, 6, 0.3, 1);
  const auto rep = diagnostics(spec, p, data, split_batch(8, 2, 0.6), 4, 1);
  const auto csv = rep.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(p.size() + 2));
  CHECK(csv.find("\nnetwork,") != std::string::npos);
  CHECK(rep.network_gc.size() == 4);

  const auto same = gen_blobs(3, 10, 6, 0.0, 1);
  std::vector<std::size_t> zeros(12, 0);
  const auto clones = subset(same, zeros);
  const auto d = diagnostics(spec, p, clones, samplewise_plan(4), 2, 1);
  for (const auto& l : d.per_layer) {
    CHECK(l.gc == Catch::Approx(1.0).margin(1e-12));
    CHECK(l.norm_ratio == Catch::Approx(1.0).margin(1e-12));
  }
}
