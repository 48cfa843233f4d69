// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/harness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace nio {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <class U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }

  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::format, path_ + ": truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RawTensor {
  std::string name;
  std::uint8_t dtype;
  Shape shape;
  const char* data;
};

template <class T>
ParamSet<T> convert(const std::vector<RawTensor>& raw) {
  ParamSet<T> out;
  for (const auto& r : raw) {
    const std::size_t n = shape_numel(r.shape);
    std::vector<T> values(n);
    if (r.dtype == 0) {
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, r.data + i * sizeof(float), sizeof(float));
        values[i] = static_cast<T>(v);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double v;
        std::memcpy(&v, r.data + i * sizeof(double), sizeof(double));
        values[i] = static_cast<T>(v);
      }
    }
    out.add(r.name, Tensor<T>(r.shape, std::move(values)));
  }
  return out;
}

std::vector<RawTensor> parse_checkpoint(Reader& in, const std::string& path) {
  const char* magic = in.take(4);
  if (std::memcmp(magic, "NIOC", 4) != 0) throw Error(ErrorCode::format, path + ": bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::format, path + ": version mismatch (file " + std::to_string(version) + ", expected " +
                                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = in.get<std::uint32_t>();
  std::vector<RawTensor> raw;
  for (std::uint32_t t = 0; t < count; ++t) {
    RawTensor r;
    const auto len = in.get<std::uint32_t>();
    r.name.assign(in.take(len), len);
    r.dtype = in.get<std::uint8_t>();
    if (r.dtype > 1) throw Error(ErrorCode::format, path + ": unknown dtype tag " + std::to_string(r.dtype));
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw Error(ErrorCode::format, path + ": implausible rank " + std::to_string(rank));
    for (std::uint32_t k = 0; k < rank; ++k) r.shape.push_back(in.get<std::uint64_t>());
    const std::size_t width = r.dtype == 0 ? sizeof(float) : sizeof(double);
    r.data = in.take(shape_numel(r.shape) * width);
    raw.push_back(std::move(r));
  }
  if (!in.done()) throw Error(ErrorCode::format, path + ": trailing bytes after last tensor");
  return raw;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::io, "cannot rename into " + path + ": " + ec.message());
  }
}

template <class T>
void save_checkpoint(const ParamSet<T>& params, const std::string& path) {
  std::string out = "NIOC";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint8_t>(out, dtype_of<T>::value == DType::f32 ? 0 : 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) put<std::uint64_t>(out, d);
    const auto v = e.tensor.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
  write_file_atomic(path, out);
}

AnyParams load_checkpoint(const std::string& path) {
  Reader in(read_all(path), path);
  const auto raw = parse_checkpoint(in, path);
  if (raw.empty()) return ParamSet<float>{};
  const auto tag = raw.front().dtype;
  for (const auto& r : raw) {
    if (r.dtype != tag) throw Error(ErrorCode::dtype_mismatch, path + ": tensors of mixed dtype");
  }
  if (tag == 0) return convert<float>(raw);
  return convert<double>(raw);
}

template <class T>
ParamSet<T> load_checkpoint_as(const std::string& path) {
  Reader in(read_all(path), path);
  return convert<T>(parse_checkpoint(in, path));
}

std::map<std::string, std::string> parse_kv_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::format, "config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::format, "config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> load_kv_config(const std::string& path) { return parse_kv_config(read_all(path)); }

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, "train config: " + what); };
  if (epochs == 0) bad("epochs must be positive");
  if (batch_size == 0) bad("batch size must be positive");
  if (!(lr >= 0.0)) bad("learning rate must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) bad("weight decay must be non-negative");
  if (!(clip_norm >= 0.0)) bad("clip norm must be non-negative");
}

template <class T>
EvalResult evaluate(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw Error(ErrorCode::invalid_argument, "evaluate: empty dataset");
  GradModeGuard off(false);
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, data.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const auto batch = make_batch<T>(data, idx);
    const auto logits = forward_logits(spec, params, batch.inputs);
    r.loss += static_cast<double>(softmax_cross_entropy(logits, batch.labels).item()) * static_cast<double>(count);
    const auto v = logits.values();
    const std::size_t c = logits.shape()[1];
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = v.begin() + static_cast<std::ptrdiff_t>(i * c);
      const auto arg = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(c)) - row);
      if (arg == batch.labels[i]) ++correct;
    }
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

template <class T>
TrainResult<T> train(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& train_set,
                     const Dataset* test_set, const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw Error(ErrorCode::invalid_argument, "train: empty training set");
  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * config.epochs);

  std::vector<std::vector<T>> weights;
  std::vector<std::vector<T>> velocity;
  for (const auto& e : params.entries()) {
    weights.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
    velocity.emplace_back(e.tensor.numel(), T(0));
  }
  auto current = [&] {
    std::vector<Tensor<T>> ts;
    for (std::size_t k = 0; k < weights.size(); ++k) ts.emplace_back(params[k].tensor.shape(), weights[k]);
    return params.with_tensors(ts);
  };

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(n);
  TrainResult<T> result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const std::size_t start = b * config.batch_size;
      const std::size_t count = std::min(config.batch_size, n - start);
      const auto batch = make_batch<T>(train_set, std::span(order).subspan(start, count));

      std::vector<double> grads_flat;
      std::vector<std::vector<T>> grads;
      double loss_value = 0.0;
      {
        GradModeGuard on(true);
        Tape<T> tape;
        std::vector<Tensor<T>> vars;
        for (std::size_t k = 0; k < weights.size(); ++k) {
          vars.push_back(tape.variable(Tensor<T>(params[k].tensor.shape(), weights[k])));
        }
        const auto loss = forward_loss(spec, params.with_tensors(vars), batch.inputs, batch.labels);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) {
          throw Error(ErrorCode::numeric, "training diverged at epoch " + std::to_string(epoch) + " (loss " +
                                              std::to_string(loss_value) + ")");
        }
        for (const auto& g : backward(loss, vars, false)) grads.emplace_back(g.values().begin(), g.values().end());
      }
      loss_sum += loss_value * static_cast<double>(count);

      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : grads)
          for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm) {
          const T factor = static_cast<T>(config.clip_norm / norm);
          for (auto& g : grads)
            for (T& v : g) v *= factor;
        }
      }
      const T lr = static_cast<T>(config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps)));
      const T mu = static_cast<T>(config.momentum);
      const T wd = static_cast<T>(config.weight_decay);
      for (std::size_t k = 0; k < weights.size(); ++k) {
        auto& w = weights[k];
        auto& v = velocity[k];
        const auto& g = grads[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = mu * v[i] + g[i] + wd * w[i];
          w[i] -= lr * v[i];
        }
      }
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(n);
    const auto now = current();
    stats.train_accuracy = evaluate(spec, now, train_set).accuracy;
    if (test_set != nullptr) stats.test_accuracy = evaluate(spec, now, *test_set).accuracy;
    result.epochs.push_back(stats);
  }
  result.params = current();
  return result;
}

std::string DiagReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "layer,gc,norm_ratio\n";
  for (const auto& l : per_layer) os << l.name << ',' << l.gc << ',' << l.norm_ratio << '\n';
  os << "network," << mean_gc << ',' << mean_norm_ratio << '\n';
  return os.str();
}

std::string DiagReport::distribution_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "batch,gc,norm_ratio\n";
  for (std::size_t b = 0; b < network_gc.size(); ++b) os << b << ',' << network_gc[b] << ',' << network_norm_ratio[b] << '\n';
  return os.str();
}

template <class T>
DiagReport diagnostics(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data, const SubBatchPlan& plan,
                       std::size_t num_batches, std::uint64_t seed) {
  if (num_batches == 0) throw Error(ErrorCode::invalid_argument, "diagnostics needs at least one batch");
  BatchIterator batches(data.size(), plan.batch_size, seed);
  DiagReport out;
  for (std::size_t b = 0; b < num_batches; ++b) {
    const auto rep = metric_report(spec, params, make_batch<T>(data, batches.next()), plan);
    if (b == 0) out.per_layer = rep.per_layer;
    out.network_gc.push_back(rep.gc);
    out.network_norm_ratio.push_back(rep.g_max / std::max(rep.g_min, kNormEpsilon));
  }
  const double nb = static_cast<double>(num_batches);
  out.mean_gc = std::accumulate(out.network_gc.begin(), out.network_gc.end(), 0.0) / nb;
  out.mean_norm_ratio = std::accumulate(out.network_norm_ratio.begin(), out.network_norm_ratio.end(), 0.0) / nb;
  return out;
}

#define NIO_INSTANTIATE(T)                                                                                    \
  template void save_checkpoint(const ParamSet<T>&, const std::string&);                                     \
  template ParamSet<T> load_checkpoint_as(const std::string&);                                               \
  template TrainResult<T> train(const ModelSpec&, const ParamSet<T>&, const Dataset&, const Dataset*,         \
                                const TrainConfig&);                                                          \
  template EvalResult evaluate(const ModelSpec&, const ParamSet<T>&, const Dataset&, std::size_t);           \
  template DiagReport diagnostics(const ModelSpec&, const ParamSet<T>&, const Dataset&, const SubBatchPlan&, \
                                  std::size_t, std::uint64_t);

NIO_INSTANTIATE(float)
NIO_INSTANTIATE(double)

}  // namespace nio
