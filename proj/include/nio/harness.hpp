// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "nio/datasets.hpp"
#include "nio/gradmetrics.hpp"
#include "nio/models.hpp"

namespace nio {

// Checkpoint layout (little-endian):
//   "NIOC" u32 version u32 count
//   per tensor: u32 name_len, name, u8 dtype (0 f32, 1 f64), u32 rank,
//               u64 extents[rank], raw values
inline constexpr std::uint32_t kCheckpointVersion = 1;

using AnyParams = std::variant<ParamSet<float>, ParamSet<double>>;

/// Written to a temporary file and renamed into place.
template <class T>
void save_checkpoint(const ParamSet<T>& params, const std::string& path);

/// Keeps the stored dtype. An empty checkpoint loads as ParamSet<float>;
/// mixed dtypes are rejected.
AnyParams load_checkpoint(const std::string& path);

/// Loads and converts to T.
template <class T>
ParamSet<T> load_checkpoint_as(const std::string& path);

/// Writes bytes to path via a temporary file in the same directory.
void write_file_atomic(const std::string& path, const std::string& bytes);

/// "key = value" lines; '#' starts a comment. Later keys override earlier ones.
std::map<std::string, std::string> parse_kv_config(const std::string& text);
std::map<std::string, std::string> load_kv_config(const std::string& path);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  double loss = 0.0;  // training loss averaged over the epoch's samples
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

template <class T>
struct TrainResult {
  ParamSet<T> params;
  std::vector<EpochStats> epochs;
};

/// SGD with momentum and weight decay. Step t of T_total uses
/// lr * (1 + cos(pi t / T_total)) / 2; the global gradient norm is clipped to
/// clip_norm before the decay term is added.
template <class T>
TrainResult<T> train(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& train_set,
                     const Dataset* test_set, const TrainConfig& config);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <class T>
EvalResult evaluate(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data,
                    std::size_t batch_size = 500);

struct DiagReport {
  std::vector<LayerMetrics> per_layer;     // first batch
  std::vector<double> network_gc;          // one value per batch
  std::vector<double> network_norm_ratio;  // g_max / g_min per batch
  double mean_gc = 0.0;
  double mean_norm_ratio = 0.0;

  /// layer,gc,norm_ratio: one row per tensor then a "network" row of means.
  std::string to_csv() const;
  /// batch,gc,norm_ratio
  std::string distribution_csv() const;
};

/// Metrics over num_batches batches of plan.batch_size samples drawn by a
/// seeded shuffle.
template <class T>
DiagReport diagnostics(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data, const SubBatchPlan& plan,
                       std::size_t num_batches, std::uint64_t seed);

}  // namespace nio
