// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/nio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nio {

const char* branch_name(Branch b) { return b == Branch::constrain ? "constrain" : "ascend"; }

GradientMode parse_gradient_mode(std::string_view name) {
  if (name == "double_backward" || name == "analytic") return GradientMode::double_backward;
  if (name == "finite_difference" || name == "fd") return GradientMode::finite_difference;
  throw Error(ErrorCode::invalid_argument, "unknown gradient mode '" + std::string(name) + "'");
}

double default_gamma(std::size_t num_classes, double base) {
  if (num_classes < 2) throw Error(ErrorCode::invalid_argument, "default_gamma needs at least 2 classes");
  return base * std::log(static_cast<double>(num_classes)) / std::log(10.0);
}

void NIOConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, "NIO config: " + what); };
  if (!(tau >= 0.0) || !std::isfinite(tau)) bad("tau must be finite and non-negative");
  if (!(gamma > 0.0)) bad("gamma must be positive");
  if (!(alpha_lb > 0.0)) bad("alpha_lb must be positive");
  if (batch_size == 0) bad("batch size must be positive");
  if (!(fd_step > 0.0)) bad("fd_step must be positive");
  split_batch(batch_size, sub_batches, overlap);
}

std::size_t NIOConfig::resolved_iterations(std::size_t dataset_size) const {
  if (iterations > 0) return iterations;
  return std::max<std::size_t>(1, (dataset_size + batch_size - 1) / batch_size);
}

std::string NIOTrace::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "iter,gc,gn,g_max,branch\n";
  for (const auto& r : records) os << r.iter << ',' << r.gc << ',' << r.gn << ',' << r.g_max << ',' << branch_name(r.branch) << '\n';
  return os.str();
}

std::string NIOTrace::snapshots_csv(const std::vector<std::string>& names) const {
  std::ostringstream os;
  os.precision(17);
  os << "iter";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (const auto& r : records) {
    if (!r.snapshot) continue;
    os << r.iter;
    for (double c : *r.snapshot) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

template <class T>
ParamSet<T> rectify(const ParamSet<T>& params, const std::vector<Tensor<T>>& scales) {
  if (scales.size() != params.size()) {
    throw Error(ErrorCode::invalid_argument, "rectify: " + std::to_string(scales.size()) + " scales for " +
                                                 std::to_string(params.size()) + " tensors");
  }
  std::vector<Tensor<T>> out;
  out.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) out.push_back(mul_scalar(params[k].tensor, scales[k]));
  return params.with_tensors(out);
}

template <class T>
ParamSet<T> rectify(const ParamSet<T>& params, const ScaleSet& scales) {
  std::vector<Tensor<T>> s;
  for (double c : scales.coeffs) s.push_back(Tensor<T>::scalar(static_cast<T>(c)));
  GradModeGuard off(false);
  return rectify(params, s);
}

template <class T>
ObjectiveTerms<T> objective(const ModelSpec& spec, const ParamSet<T>& params, const std::vector<Tensor<T>>& scales,
                            const Batch<T>& batch, const SubBatchPlan& plan) {
  const bool taped = std::all_of(scales.begin(), scales.end(), [](const Tensor<T>& s) { return s.on_tape(); });
  const auto rect = rectify(params, scales);
  const auto grads = sample_gradients(spec, rect, batch, plan, taped);
  const auto cn = cosine_and_norm(grads);
  return {cn.gc, cn.gn, cn.g_max, cn.g_min};
}

template <class T>
std::vector<double> objective_gradient_fd(const ModelSpec& spec, const ParamSet<T>& params, const ScaleSet& scales,
                                          const Batch<T>& batch, const SubBatchPlan& plan, bool gn_only,
                                          double step) {
  GradModeGuard off(false);
  auto target = [&](const ScaleSet& s) {
    std::vector<Tensor<T>> st;
    for (double c : s.coeffs) st.push_back(Tensor<T>::scalar(static_cast<T>(c)));
    const auto terms = objective(spec, params, st, batch, plan);
    const double gn = static_cast<double>(terms.gn.item());
    return gn_only ? gn : gn + static_cast<double>(terms.gc.item());
  };
  std::vector<double> grad(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    ScaleSet hi = scales, lo = scales;
    hi.coeffs[k] += step;
    lo.coeffs[k] -= step;
    grad[k] = (target(hi) - target(lo)) / (2.0 * step);
  }
  return grad;
}

template <class T>
ObjectiveGradient objective_gradient(const ModelSpec& spec, const ParamSet<T>& params, const ScaleSet& scales,
                                     const Batch<T>& batch, const SubBatchPlan& plan, const NIOConfig& config) {
  if (scales.size() != params.size()) throw Error(ErrorCode::invalid_argument, "scale count does not match params");
  ObjectiveGradient out;
  GradModeGuard on(true);
  Tape<T> tape;
  std::vector<Tensor<T>> vars;
  for (double c : scales.coeffs) vars.push_back(tape.variable(Tensor<T>::scalar(static_cast<T>(c))));
  std::vector<Tensor<T>> base;
  for (const auto& e : params.entries()) base.push_back(e.tensor.detach());
  const auto terms = objective(spec, params.with_tensors(base), vars, batch, plan);
  out.gc = static_cast<double>(terms.gc.item());
  out.gn = static_cast<double>(terms.gn.item());
  out.g_max = terms.g_max;
  out.branch = out.g_max > config.gamma ? Branch::constrain : Branch::ascend;
  const bool gn_only = out.branch == Branch::constrain;

  if (config.gradient_mode == GradientMode::finite_difference) {
    out.grad = objective_gradient_fd(spec, params, scales, batch, plan, gn_only, config.fd_step);
  } else {
    const Tensor<T> target = gn_only ? terms.gn : add(terms.gc, terms.gn);
    const auto g = backward(target, vars, false);
    out.grad.reserve(g.size());
    for (const auto& t : g) out.grad.push_back(static_cast<double>(t.item()));
  }
  if (!std::isfinite(out.gc) || !std::isfinite(out.gn) || !std::isfinite(out.g_max)) {
    throw Error(ErrorCode::numeric, "non-finite objective");
  }
  return out;
}

ScaleSet nio_step(const ScaleSet& scales, const std::vector<double>& grad, double g_max, const NIOConfig& config) {
  if (grad.size() != scales.size()) throw Error(ErrorCode::invalid_argument, "gradient count does not match scales");
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) {
      throw Error(ErrorCode::numeric, "non-finite objective gradient for coefficient " + std::to_string(k));
    }
  }
  if (!std::isfinite(g_max)) throw Error(ErrorCode::numeric, "non-finite g_max");
  const double sign = g_max > config.gamma ? -1.0 : 1.0;
  ScaleSet out = scales;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    out.coeffs[k] = std::max(out.coeffs[k] + sign * config.tau * grad[k], config.alpha_lb);
  }
  return out;
}

template <class T>
NIOResult<T> nio_run(const ModelSpec& spec, const ParamSet<T>& params, const Dataset& data, const NIOConfig& config) {
  config.validate();
  const auto plan = split_batch(config.batch_size, config.sub_batches, config.overlap);
  const std::size_t iterations = config.resolved_iterations(data.size());
  BatchIterator batches(data.size(), config.batch_size, config.seed);
  NIOResult<T> result;
  result.scales = ScaleSet::ones(params.size());
  for (std::size_t t = 1; t <= iterations; ++t) {
    const auto idx = batches.next();
    const auto batch = make_batch<T>(data, idx);
    ObjectiveGradient og;
    try {
      og = objective_gradient(spec, params, result.scales, batch, plan, config);
      result.scales = nio_step(result.scales, og.grad, og.g_max, config);
    } catch (const Error& e) {
      throw Error(e.code(), "NIO iteration " + std::to_string(t) + ": " + e.what());
    }
    NIORecord rec;
    rec.iter = t;
    rec.gc = og.gc;
    rec.gn = og.gn;
    rec.g_max = og.g_max;
    rec.branch = og.branch;
    rec.min_coeff = *std::min_element(result.scales.coeffs.begin(), result.scales.coeffs.end());
    if ((config.snapshot_every > 0 && t % config.snapshot_every == 0) || t == iterations) {
      rec.snapshot = result.scales.coeffs;
    }
    result.trace.records.push_back(std::move(rec));
  }
  result.rectified = rectify(params, result.scales);
  return result;
}

#define NIO_INSTANTIATE(T)                                                                                         \
  template ParamSet<T> rectify(const ParamSet<T>&, const std::vector<Tensor<T>>&);                                 \
  template ParamSet<T> rectify(const ParamSet<T>&, const ScaleSet&);                                               \
  template ObjectiveTerms<T> objective(const ModelSpec&, const ParamSet<T>&, const std::vector<Tensor<T>>&,        \
                                       const Batch<T>&, const SubBatchPlan&);                                      \
  template ObjectiveGradient objective_gradient(const ModelSpec&, const ParamSet<T>&, const ScaleSet&,             \
                                                const Batch<T>&, const SubBatchPlan&, const NIOConfig&);           \
  template std::vector<double> objective_gradient_fd(const ModelSpec&, const ParamSet<T>&, const ScaleSet&,        \
                                                     const Batch<T>&, const SubBatchPlan&, bool, double);          \
  template NIOResult<T> nio_run(const ModelSpec&, const ParamSet<T>&, const Dataset&, const NIOConfig&);

NIO_INSTANTIATE(float)
NIO_INSTANTIATE(double)

}  // namespace nio
