// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/gradmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace nio {

SubBatchPlan split_batch(std::size_t batch_size, std::size_t sub_batches, double overlap) {
  if (batch_size == 0 || sub_batches == 0) throw Error(ErrorCode::invalid_argument, "split_batch: B and D must be positive");
  if (sub_batches > batch_size) {
    throw Error(ErrorCode::invalid_argument, "split_batch: D = " + std::to_string(sub_batches) + " exceeds B = " +
                                                 std::to_string(batch_size));
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw Error(ErrorCode::invalid_argument, "split_batch: overlap must lie in [0, 1)");
  const double span = static_cast<double>(sub_batches) - overlap;
  // Relative slack absorbs representation error in r (0.6 is not exact).
  constexpr double kSlack = 1e-9;
  const double exact_n = static_cast<double>(batch_size) / span;
  const auto n = static_cast<std::size_t>(std::ceil(exact_n * (1.0 - kSlack)));
  if (n > batch_size) {
    throw Error(ErrorCode::invalid_argument, "split_batch: sub-batch size " + std::to_string(n) + " exceeds B = " +
                                                 std::to_string(batch_size));
  }
  SubBatchPlan plan;
  plan.batch_size = batch_size;
  plan.sub_batches = sub_batches;
  plan.overlap = overlap;
  plan.sub_batch_size = n;
  for (std::size_t d = 1; d <= sub_batches; ++d) {
    const double offset = static_cast<double>(n) * static_cast<double>(d - 1) * (1.0 - overlap);
    std::size_t first = static_cast<std::size_t>(std::floor(offset * (1.0 + kSlack) + kSlack)) + 1;
    std::size_t last = first + n - 1;
    if (last > batch_size) {
      last = batch_size;
      first = batch_size - n + 1;
    }
    plan.ranges.push_back({first, last});
  }
  return plan;
}

SubBatchPlan samplewise_plan(std::size_t batch_size) { return split_batch(batch_size, batch_size, 0.0); }

template <class T>
std::vector<Tensor<T>> sample_gradients(const ModelSpec& spec, const ParamSet<T>& params, const Batch<T>& batch,
                                        const SubBatchPlan& plan, bool create_graph) {
  if (batch.labels.size() != plan.batch_size || batch.inputs.rank() == 0 ||
      batch.inputs.shape()[0] != plan.batch_size) {
    throw Error(ErrorCode::shape_mismatch, "batch of " + std::to_string(batch.labels.size()) +
                                               " samples does not match plan B = " + std::to_string(plan.batch_size));
  }
  bool taped = !params.empty() && params[0].tensor.on_tape();
  for (const auto& p : params.entries()) {
    if (p.tensor.on_tape() != taped) {
      throw Error(ErrorCode::not_on_tape, "sample_gradients: parameters are only partly recorded on a tape");
    }
  }
  std::vector<Tensor<T>> out;
  out.reserve(plan.ranges.size());
  for (const auto& range : plan.ranges) {
    const std::size_t count = range.last - range.first + 1;
    const Tensor<T> inputs = rows(batch.inputs.detach(), range.first - 1, count);
    const std::span<const int> labels(batch.labels.data() + range.first - 1, count);
    if (taped && create_graph) {
      GradModeGuard on(true);
      const auto loss = forward_loss(spec, params, inputs, labels);
      out.push_back(concat(backward(loss, params.tensors(), true)));
    } else {
      GradModeGuard on(true);
      Tape<T> tape;
      std::vector<Tensor<T>> vars;
      for (const auto& p : params.entries()) vars.push_back(tape.variable(p.tensor.detach()));
      const auto loss = forward_loss(spec, params.with_tensors(vars), inputs, labels);
      out.push_back(concat(backward(loss, vars, false)).detach());
    }
  }
  return out;
}

template <class T>
CosineNorm<T> cosine_and_norm(const std::vector<Tensor<T>>& grads) {
  if (grads.empty()) throw Error(ErrorCode::invalid_argument, "cosine_and_norm: no gradients");
  const std::size_t d = grads.size();
  for (const auto& g : grads) {
    if (g.numel() != grads[0].numel()) throw Error(ErrorCode::shape_mismatch, "gradient length mismatch");
  }
  std::vector<Tensor<T>> norms;
  norms.reserve(d);
  CosineNorm<T> out;
  out.g_max = 0.0;
  out.g_min = std::numeric_limits<double>::infinity();
  for (const auto& g : grads) {
    norms.push_back(l2norm(g));
    const double v = static_cast<double>(norms.back().item());
    out.g_max = std::max(out.g_max, v);
    out.g_min = std::min(out.g_min, v);
  }

  // phi[i][j] = g_i . g_j / (|g_i| |g_j|); the grid is symmetric so each
  // off-diagonal entry is computed once and summed twice in grid order.
  std::vector<std::vector<Tensor<T>>> phi(d, std::vector<Tensor<T>>(d));
  auto usable = [&](std::size_t i) { return static_cast<double>(norms[i].item()) >= kNormEpsilon; };
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      if (!usable(i) || !usable(j)) continue;
      phi[i][j] = div(dot(grads[i], grads[j]), mul(norms[i], norms[j]));
      phi[j][i] = phi[i][j];
    }
  }
  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (phi[i][j].defined()) total = add(total, phi[i][j]);
  out.gc = scale(total, T(1) / static_cast<T>(d * d));

  Tensor<T> norm_total = Tensor<T>::scalar(T(0));
  for (const auto& n : norms) norm_total = add(norm_total, n);
  out.gn = scale(norm_total, T(1) / static_cast<T>(d));
  return out;
}

namespace {

std::vector<Tensor<double>> as_tensors(const std::vector<std::vector<double>>& grads) {
  std::vector<Tensor<double>> out;
  for (const auto& g : grads) {
    if (g.empty()) throw Error(ErrorCode::shape_mismatch, "empty gradient vector");
    out.emplace_back(Shape{g.size()}, g);
  }
  return out;
}

}  // namespace

double grad_cosine(const std::vector<std::vector<double>>& grads) {
  GradModeGuard off(false);
  return cosine_and_norm(as_tensors(grads)).gc.item();
}

double grad_norm_avg(const std::vector<std::vector<double>>& grads) {
  GradModeGuard off(false);
  return cosine_and_norm(as_tensors(grads)).gn.item();
}

namespace {

// Symmetric D x D Gram matrix of the slice [offset, offset + n) of every
// gradient, accumulated in double over cache-sized chunks in a fixed order.
template <class T>
std::vector<double> slice_gram(const std::vector<Tensor<T>>& grads, std::size_t offset, std::size_t n) {
  constexpr std::size_t kChunk = 2048;
  const std::size_t d = grads.size();
  std::vector<double> gram(d * d, 0.0);
  for (std::size_t c0 = 0; c0 < n; c0 += kChunk) {
    const std::size_t len = std::min(kChunk, n - c0);
    for (std::size_t i = 0; i < d; ++i) {
      const T* gi = grads[i].values().data() + offset + c0;
      for (std::size_t j = i; j < d; ++j) {
        const T* gj = grads[j].values().data() + offset + c0;
        double lanes[8] = {};
        std::size_t k = 0;
        for (; k + 8 <= len; k += 8) {
          for (std::size_t l = 0; l < 8; ++l) lanes[l] += static_cast<double>(gi[k + l]) * static_cast<double>(gj[k + l]);
        }
        for (std::size_t l = 0; k < len; ++k, ++l) lanes[l] += static_cast<double>(gi[k]) * static_cast<double>(gj[k]);
        gram[i * d + j] += ((lanes[0] + lanes[4]) + (lanes[2] + lanes[6])) + ((lanes[1] + lanes[5]) + (lanes[3] + lanes[7]));
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) gram[i * d + j] = gram[j * d + i];
  return gram;
}

struct GramMetrics {
  double gc = 0.0;
  double gn = 0.0;
  double g_max = 0.0;
  double g_min = 0.0;
};

GramMetrics from_gram(const std::vector<double>& gram, std::size_t d) {
  GramMetrics m;
  std::vector<double> norms(d);
  m.g_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d; ++i) {
    norms[i] = std::sqrt(std::max(gram[i * d + i], 0.0));
    m.gn += norms[i];
    m.g_max = std::max(m.g_max, norms[i]);
    m.g_min = std::min(m.g_min, norms[i]);
  }
  m.gn /= static_cast<double>(d);
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (norms[i] < kNormEpsilon || norms[j] < kNormEpsilon) continue;
      total += gram[i * d + j] / (norms[i] * norms[j]);
    }
  }
  m.gc = total / static_cast<double>(d * d);
  return m;
}

}  // namespace

template <class T>
GradReport metric_report(const ModelSpec& spec, const ParamSet<T>& params, const Batch<T>& batch,
                         const SubBatchPlan& plan) {
  const auto grads = sample_gradients(spec, params, batch, plan, false);
  const std::size_t d = grads.size();
  GradReport report;
  report.grads.reserve(d);
  for (const auto& g : grads) report.grads.emplace_back(g.values().begin(), g.values().end());

  std::vector<double> whole(d * d, 0.0);
  std::size_t offset = 0;
  for (const auto& entry : params.entries()) {
    const std::size_t n = entry.tensor.numel();
    const auto gram = slice_gram(grads, offset, n);
    for (std::size_t i = 0; i < gram.size(); ++i) whole[i] += gram[i];
    const auto layer = from_gram(gram, d);
    report.per_layer.push_back({entry.name, layer.gc, layer.g_max / std::max(layer.g_min, kNormEpsilon)});
    offset += n;
  }
  const auto net = from_gram(whole, d);
  report.gc = net.gc;
  report.gn = net.gn;
  report.g_max = net.g_max;
  report.g_min = net.g_min;
  return report;
}

std::string report_to_json(const GradReport& report) {
  nlohmann::ordered_json j;
  j["gn"] = report.gn;
  j["gc"] = report.gc;
  j["g_max"] = report.g_max;
  j["g_min"] = report.g_min;
  nlohmann::ordered_json layers = nlohmann::ordered_json::object();
  for (const auto& l : report.per_layer) layers[l.name] = {{"gc", l.gc}, {"norm_ratio", l.norm_ratio}};
  j["per_layer"] = std::move(layers);
  return j.dump(2);
}

std::string report_to_csv(const GradReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,gc,norm_ratio\n";
  for (const auto& l : report.per_layer) os << l.name << ',' << l.gc << ',' << l.norm_ratio << '\n';
  return os.str();
}

template std::vector<Tensor<float>> sample_gradients(const ModelSpec&, const ParamSet<float>&, const Batch<float>&,
                                                     const SubBatchPlan&, bool);
template std::vector<Tensor<double>> sample_gradients(const ModelSpec&, const ParamSet<double>&, const Batch<double>&,
                                                      const SubBatchPlan&, bool);
template CosineNorm<float> cosine_and_norm(const std::vector<Tensor<float>>&);
template CosineNorm<double> cosine_and_norm(const std::vector<Tensor<double>>&);
template GradReport metric_report(const ModelSpec&, const ParamSet<float>&, const Batch<float>&, const SubBatchPlan&);
template GradReport metric_report(const ModelSpec&, const ParamSet<double>&, const Batch<double>&, const SubBatchPlan&);

}  // namespace nio
