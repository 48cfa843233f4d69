// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver. Talks to the library only through the C interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nio/nio_c.h"

namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(nio_status s, const std::string& what) {
  if (s != NIO_OK) throw Failure(what + ": " + nio_last_error());
}

struct DatasetFree {
  void operator()(nio_dataset* d) const { nio_dataset_free(d); }
};
struct ModelFree {
  void operator()(nio_model* m) const { nio_model_free(m); }
};
struct ParamsFree {
  void operator()(nio_params* p) const { nio_params_free(p); }
};
struct StringFree {
  void operator()(char* s) const { nio_string_free(s); }
};
using DatasetPtr = std::unique_ptr<nio_dataset, DatasetFree>;
using ModelPtr = std::unique_ptr<nio_model, ModelFree>;
using ParamsPtr = std::unique_ptr<nio_params, ParamsFree>;
using StringPtr = std::unique_ptr<char, StringFree>;

// Temp file next to the target, then rename.
void write_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Failure("cannot write " + tmp);
    out << text;
    if (!out.flush()) throw Failure("cannot write " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Failure("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

struct Options {
  std::string model = "mlp3";
  std::string init = "kaiming";
  std::string dataset = "blobs";
  std::string data_dir;
  std::size_t classes = 10;
  std::size_t per_class = 100;
  std::size_t dim = 784;
  double spread = 0.1;
  std::uint64_t data_seed = 1;
  std::size_t batch_size = 0;
  std::size_t sub_batches = 2;
  double overlap = 0.6;
  double gamma = 0.0;
  double tau = 0.05;
  std::size_t iters = 0;
  double alpha_lb = 0.01;
  std::uint64_t seed = 0;
  std::string dtype = "f32";
  std::string out;
  std::string checkpoint;
  std::string trace;
  std::string scales;
  std::string log;
  std::string distribution;
  bool finite_difference = false;
  std::size_t epochs = 20;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip = 1.0;
  std::size_t trials = 500;
  std::size_t bound_trials = 0;
  std::size_t num_batches = 20;
};

struct Data {
  DatasetPtr train;
  DatasetPtr test;  // may be null
};

Data load_data(const Options& o) {
  Data data;
  nio_dataset* raw = nullptr;
  if (o.dataset == "blobs") {
    check(nio_dataset_blobs(o.classes, o.per_class, o.dim, o.spread, o.data_seed, &raw), "blobs");
    data.train.reset(raw);
    check(nio_dataset_blobs(o.classes, o.per_class, o.dim, o.spread, o.data_seed + 1, &raw), "blobs");
    data.test.reset(raw);
  } else if (o.dataset == "mnist") {
    if (o.data_dir.empty()) throw Failure("--data-dir is required for mnist");
    const fs::path dir(o.data_dir);
    check(nio_dataset_idx((dir / "train-images-idx3-ubyte").c_str(), (dir / "train-labels-idx1-ubyte").c_str(), &raw),
          "mnist train");
    data.train.reset(raw);
    const fs::path ti = dir / "t10k-images-idx3-ubyte";
    const fs::path tl = dir / "t10k-labels-idx1-ubyte";
    if (fs::exists(ti) && fs::exists(tl)) {
      check(nio_dataset_idx(ti.c_str(), tl.c_str(), &raw), "mnist test");
      data.test.reset(raw);
    }
  } else if (o.dataset == "cifar10") {
    if (o.data_dir.empty()) throw Failure("--data-dir is required for cifar10");
    const fs::path dir(o.data_dir);
    std::vector<std::string> files;
    for (int i = 1; i <= 5; ++i) {
      const fs::path p = dir / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(p)) files.push_back(p.string());
    }
    if (files.empty()) throw Failure("no data_batch_*.bin in " + o.data_dir);
    std::vector<const char*> ptrs;
    for (const auto& f : files) ptrs.push_back(f.c_str());
    check(nio_dataset_cifar10(ptrs.data(), ptrs.size(), 1, &raw), "cifar10 train");
    data.train.reset(raw);
    const std::string test = (dir / "test_batch.bin").string();
    if (fs::exists(test)) {
      const char* tp = test.c_str();
      check(nio_dataset_cifar10(&tp, 1, 1, &raw), "cifar10 test");
      data.test.reset(raw);
    }
  } else {
    throw Failure("unknown dataset " + o.dataset);
  }
  return data;
}

ModelPtr make_model(const Options& o, const nio_dataset* d) {
  std::size_t dims[8];
  std::size_t rank = 0;
  check(nio_dataset_sample_shape(d, dims, 8, &rank), "sample shape");
  if (rank > 8) throw Failure("sample rank too large");
  nio_model* m = nullptr;
  check(nio_model_create(o.model.c_str(), dims, rank, nio_dataset_classes(d), &m), "model");
  return ModelPtr(m);
}

nio_dtype parse_dtype(const std::string& s) {
  if (s == "f32" || s == "float32") return NIO_F32;
  if (s == "f64" || s == "float64") return NIO_F64;
  throw Failure("unknown dtype " + s);
}

// Checkpoint if given, else a fresh initialization with --init and --seed.
ParamsPtr base_params(const Options& o, const nio_model* m) {
  nio_params* p = nullptr;
  if (!o.checkpoint.empty()) {
    check(nio_params_load(o.checkpoint.c_str(), &p), "load " + o.checkpoint);
    ParamsPtr loaded(p);
    const nio_dtype want = parse_dtype(o.dtype);
    if (nio_params_dtype(loaded.get()) == want) return loaded;
    check(nio_params_convert(loaded.get(), want, &p), "convert");
    return ParamsPtr(p);
  }
  check(nio_params_init(m, o.init.c_str(), o.seed, parse_dtype(o.dtype), &p), "init " + o.init);
  return ParamsPtr(p);
}

std::string take(char* s) {
  StringPtr owned(s);
  return s ? std::string(s) : std::string();
}

int run_init(const Options& o) {
  if (o.out.empty()) throw Failure("init needs --out");
  auto data = load_data(o);
  auto model = make_model(o, data.train.get());
  auto params = base_params(o, model.get());
  nio_init_config c;
  nio_init_config_default(&c);
  c.tau = o.tau;
  c.gamma = o.gamma > 0 ? o.gamma : nio_default_gamma(nio_dataset_classes(data.train.get()));
  c.alpha_lb = o.alpha_lb;
  c.iterations = o.iters;
  if (o.batch_size) c.batch_size = o.batch_size;
  c.sub_batches = o.sub_batches;
  c.overlap = o.overlap;
  c.seed = o.seed;
  c.finite_difference = o.finite_difference ? 1 : 0;
  nio_params* rect = nullptr;
  char* trace = nullptr;
  char* scales = nullptr;
  check(nio_init_run(model.get(), params.get(), data.train.get(), &c, &rect, &trace, o.scales.empty() ? nullptr : &scales),
        "init");
  ParamsPtr rectified(rect);
  const std::string trace_csv = take(trace);
  const std::string scales_csv = take(scales);
  check(nio_params_save(rectified.get(), o.out.c_str()), "save " + o.out);
  write_atomic(o.trace.empty() ? o.out + ".trace.csv" : o.trace, trace_csv);
  if (!o.scales.empty()) write_atomic(o.scales, scales_csv);
  std::cout << "wrote " << o.out << '\n';
  return 0;
}

int run_metrics(const Options& o) {
  auto data = load_data(o);
  auto model = make_model(o, data.train.get());
  auto params = base_params(o, model.get());
  char* json = nullptr;
  check(nio_metrics_json(model.get(), params.get(), data.train.get(), o.batch_size ? o.batch_size : 64, o.sub_batches,
                         o.overlap, o.seed, &json),
        "metrics");
  const std::string text = take(json) + "\n";
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_atomic(o.out, text);
  }
  return 0;
}

int run_train(const Options& o) {
  auto data = load_data(o);
  auto model = make_model(o, data.train.get());
  auto params = base_params(o, model.get());
  nio_train_config c;
  nio_train_config_default(&c);
  c.epochs = o.epochs;
  if (o.batch_size) c.batch_size = o.batch_size;
  c.lr = o.lr;
  c.momentum = o.momentum;
  c.weight_decay = o.weight_decay;
  c.clip_norm = o.clip;
  c.seed = o.seed;
  nio_params* trained = nullptr;
  char* log = nullptr;
  check(nio_train(model.get(), params.get(), data.train.get(), data.test.get(), &c, &trained, &log), "train");
  ParamsPtr result(trained);
  const std::string log_csv = take(log);
  if (!o.out.empty()) check(nio_params_save(result.get(), o.out.c_str()), "save " + o.out);
  if (o.log.empty()) {
    std::cout << log_csv;
  } else {
    write_atomic(o.log, log_csv);
  }
  return 0;
}

int run_oracle(const Options& o) {
  char* csv = nullptr;
  std::size_t failures = 0;
  check(nio_oracle_sweep(o.trials, o.seed, &csv, &failures), "oracle");
  const std::string text = take(csv);
  if (!o.out.empty()) write_atomic(o.out, text);
  std::cout << "loss bound instances " << o.trials << " holds " << (o.trials - failures) << " failures " << failures
            << '\n';
  if (o.bound_trials > 0) {
    double rate = 0.0;
    check(nio_oracle_theorem3(16, 4, 0.1, o.bound_trials, o.seed, &rate), "theorem3");
    std::ostringstream os;
    os.precision(6);
    os << "population bound trials " << o.bound_trials << " violation_rate " << rate << '\n';
    std::cout << os.str();
  }
  return failures == 0 ? 0 : 1;
}

int run_diag(const Options& o) {
  auto data = load_data(o);
  auto model = make_model(o, data.train.get());
  auto params = base_params(o, model.get());
  char* csv = nullptr;
  char* dist = nullptr;
  check(nio_diagnostics(model.get(), params.get(), data.train.get(), o.batch_size ? o.batch_size : 64, o.sub_batches,
                        o.overlap, o.num_batches, o.seed, &csv, o.distribution.empty() ? nullptr : &dist),
        "diag");
  const std::string text = take(csv);
  const std::string dist_csv = take(dist);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_atomic(o.out, text);
  }
  if (!o.distribution.empty()) write_atomic(o.distribution, dist_csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural initialization optimization toolkit"};
  app.set_config("--config", "", "key=value file; command-line flags override it");
  app.require_subcommand(1, 1);
  Options o;

  app.add_option("--model", o.model, "mlp3, cnn4 or a layer list")->capture_default_str();
  app.add_option("--init", o.init, "kaiming, xavier, orthogonal, trunc_normal")->capture_default_str();
  app.add_option("--dataset", o.dataset, "blobs, mnist or cifar10")
      ->check(CLI::IsMember({"blobs", "mnist", "cifar10"}))
      ->capture_default_str();
  app.add_option("--data-dir", o.data_dir, "directory holding IDX or CIFAR-10 binary files");
  app.add_option("--classes", o.classes, "blobs: class count")->capture_default_str();
  app.add_option("--per-class", o.per_class, "blobs: samples per class")->capture_default_str();
  app.add_option("--dim", o.dim, "blobs: input dimension")->capture_default_str();
  app.add_option("--spread", o.spread, "blobs: per-coordinate std")->capture_default_str();
  app.add_option("--data-seed", o.data_seed, "blobs: generator seed")->capture_default_str();
  app.add_option("--batch-size", o.batch_size, "batch size (0: 64 for init/metrics/diag, 128 for train)")
      ->capture_default_str();
  app.add_option("--sub-batches", o.sub_batches, "D")->capture_default_str();
  app.add_option("--overlap", o.overlap, "r in [0, 1)")->capture_default_str();
  app.add_option("--gamma", o.gamma, "norm bound (0: 3 ln C / ln 10)")->capture_default_str();
  app.add_option("--tau", o.tau, "step size")->capture_default_str();
  app.add_option("--iters", o.iters, "iterations (0: one epoch)")->capture_default_str();
  app.add_option("--alpha-lb", o.alpha_lb, "lower bound on scale coefficients")->capture_default_str();
  app.add_option("--seed", o.seed, "seed for initialization and batch order")->capture_default_str();
  app.add_option("--dtype", o.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64", "float32", "float64"}))
      ->capture_default_str();
  app.add_option("--out", o.out, "output file");
  app.add_option("--checkpoint", o.checkpoint, "input checkpoint");
  app.add_option("--trace", o.trace, "init: trace CSV (default <out>.trace.csv)");
  app.add_option("--scales", o.scales, "init: coefficient snapshot CSV");
  app.add_flag("--finite-difference", o.finite_difference, "init: central differences instead of double backward");
  app.add_option("--epochs", o.epochs, "train: epochs")->capture_default_str();
  app.add_option("--lr", o.lr, "train: initial learning rate")->capture_default_str();
  app.add_option("--momentum", o.momentum, "train: momentum")->capture_default_str();
  app.add_option("--weight-decay", o.weight_decay, "train: weight decay")->capture_default_str();
  app.add_option("--clip", o.clip, "train: gradient clip norm (0 disables)")->capture_default_str();
  app.add_option("--log", o.log, "train: per-epoch CSV (default stdout)");
  app.add_option("--trials", o.trials, "oracle: random landscapes")->capture_default_str();
  app.add_option("--bound-trials", o.bound_trials, "oracle: Gaussian-optima trials (0 skips)")
      ->capture_default_str();
  app.add_option("--num-batches", o.num_batches, "diag: batches for the distribution")->capture_default_str();
  app.add_option("--distribution", o.distribution, "diag: per-batch CSV");

  auto* init = app.add_subcommand("init", "optimize an initialization and write the rectified checkpoint");
  auto* metrics = app.add_subcommand("metrics", "gradient cosine / norm report as JSON");
  auto* train = app.add_subcommand("train", "train from a checkpoint or a fresh initialization");
  auto* oracle = app.add_subcommand("oracle", "check the bounds on random quadratic landscapes");
  auto* diag = app.add_subcommand("diag", "per-layer and whole-network diagnostics CSV");
  for (auto* sub : {init, metrics, train, oracle, diag}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*init) return run_init(o);
    if (*metrics) return run_metrics(o);
    if (*train) return run_train(o);
    if (*oracle) return run_oracle(o);
    if (*diag) return run_diag(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
