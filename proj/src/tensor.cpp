// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nio {

namespace {
thread_local bool g_grad_mode = true;
constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();
}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(std::string_view name) {
  if (name == "f32" || name == "float32") return DType::f32;
  if (name == "f64" || name == "float64") return DType::f64;
  throw Error(ErrorCode::invalid_argument, "unknown dtype '" + std::string(name) + "'");
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_mode_enabled() noexcept { return g_grad_mode; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(g_grad_mode) { g_grad_mode = enabled; }
GradModeGuard::~GradModeGuard() { g_grad_mode = previous_; }

// ---------------------------------------------------------------------------

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  for (auto e : shape_) {
    if (e == 0) throw Error(ErrorCode::shape_mismatch, "tensor extents must be positive, got " + shape_str(shape_));
  }
  if (shape_numel(shape_) != values.size()) {
    throw Error(ErrorCode::shape_mismatch, "tensor shape " + shape_str(shape_) + " does not match " +
                                               std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<T>>(std::move(values));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <class T>
std::span<const T> Tensor<T>::values() const noexcept {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::shape_mismatch, "item() needs a one-element tensor, got " + shape_str(shape_));
  }
  return (*data_)[0];
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> Tape<T>::variable(const Tensor<T>& value) {
  if (!value.defined()) throw Error(ErrorCode::invalid_argument, "cannot register an undefined tensor");
  Tensor<T> out = value.detach();
  out.tape_ = this;
  out.node_ = nodes_.size();
  nodes_.push_back(Node{{}, {}, out});
  return out;
}

template <class T>
Tensor<T> Tape<T>::record(Tensor<T> value, const std::vector<Tensor<T>>& inputs, BackwardFn fn) {
  Node node;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.on_tape() && in.tape() != this) {
      throw Error(ErrorCode::not_on_tape, "op inputs are recorded on different tapes");
    }
    node.inputs.push_back(in.on_tape() ? in.node() : kNoNode);
  }
  node.backward = std::move(fn);
  value.tape_ = this;
  value.node_ = nodes_.size();
  node.output = value;
  nodes_.push_back(std::move(node));
  return value;
}

template <class T>
std::vector<Tensor<T>> Tape<T>::backward(const Tensor<T>& output, std::span<const Tensor<T>> wrt,
                                         bool create_graph) {
  if (output.numel() != 1) {
    throw Error(ErrorCode::shape_mismatch,
                "backward needs a scalar output, got shape " + shape_str(output.shape()));
  }
  if (output.tape() != this) throw Error(ErrorCode::not_on_tape, "backward: output is not on this tape");
  std::size_t lowest = output.node();
  std::vector<bool> keep(output.node() + 1, false);
  for (const auto& w : wrt) {
    if (w.tape() != this) throw Error(ErrorCode::not_on_tape, "backward: wrt tensor is not on this tape");
    lowest = std::min(lowest, w.node());
    if (w.node() <= output.node()) keep[w.node()] = true;
  }
  passes_.push_back(create_graph);

  GradModeGuard mode(create_graph);
  std::vector<Tensor<T>> grads(output.node() + 1);
  grads[output.node()] = Tensor<T>::full(output.shape(), T(1));

  for (std::size_t id = output.node() + 1; id-- > lowest;) {
    if (!grads[id].defined()) continue;
    // Nodes may be appended (and the vector reallocated) while fn runs.
    const BackwardFn fn = nodes_[id].backward;
    if (!fn) continue;
    const std::vector<std::size_t> inputs = nodes_[id].inputs;
    const Tensor<T> output_value = nodes_[id].output;
    std::vector<bool> needs(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) needs[k] = inputs[k] != kNoNode && inputs[k] >= lowest;
    std::vector<Tensor<T>> in_grads = fn(grads[id], output_value, needs);
    if (!keep[id]) grads[id] = Tensor<T>();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (!needs[k] || k >= in_grads.size() || !in_grads[k].defined()) continue;
      auto& slot = grads[inputs[k]];
      if (in_grads[k].shape() != nodes_[inputs[k]].output.shape()) {
        throw Error(ErrorCode::shape_mismatch, "internal: adjoint shape " + shape_str(in_grads[k].shape()) +
                                                   " does not match " + shape_str(nodes_[inputs[k]].output.shape()));
      }
      slot = slot.defined() ? add(slot, in_grads[k]) : std::move(in_grads[k]);
    }
  }

  std::vector<Tensor<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.node() <= output.node() && grads[w.node()].defined()) {
      out.push_back(grads[w.node()]);
    } else {
      out.push_back(Tensor<T>::zeros(w.shape()));
    }
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> backward(const Tensor<T>& output, const std::vector<Tensor<T>>& wrt, bool create_graph) {
  if (!output.on_tape()) throw Error(ErrorCode::not_on_tape, "backward: output is not recorded on a tape");
  return output.tape()->backward(output, std::span<const Tensor<T>>(wrt), create_graph);
}

template <class T>
double grad_check(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                  const std::vector<Tensor<T>>& point, double step) {
  if (!(step > 0)) throw Error(ErrorCode::invalid_argument, "grad_check: step must be positive");
  std::vector<Tensor<T>> analytic;
  {
    Tape<T> tape;
    std::vector<Tensor<T>> vars;
    for (const auto& p : point) vars.push_back(tape.variable(p));
    const Tensor<T> y = f(vars);
    if (!std::isfinite(static_cast<double>(y.item()))) {
      throw Error(ErrorCode::numeric, "grad_check: non-finite function value");
    }
    if (!y.on_tape()) {
      for (const auto& p : point) analytic.push_back(Tensor<T>::zeros(p.shape()));
    } else {
      analytic = backward(y, vars, false);
    }
  }

  GradModeGuard no_grad(false);
  std::vector<Tensor<T>> probe(point.begin(), point.end());
  auto eval = [&]() {
    const double v = static_cast<double>(f(probe).item());
    if (!std::isfinite(v)) throw Error(ErrorCode::numeric, "grad_check: non-finite function value");
    return v;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < point.size(); ++k) {
    std::vector<T> values(point[k].values().begin(), point[k].values().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = static_cast<T>(saved + step);
      probe[k] = Tensor<T>(point[k].shape(), values);
      const double plus = eval();
      values[i] = static_cast<T>(saved - step);
      probe[k] = Tensor<T>(point[k].shape(), values);
      const double minus = eval();
      values[i] = saved;
      const double central = (plus - minus) / (2.0 * step);
      const double exact = static_cast<double>(analytic[k].at(i));
      worst = std::max(worst, std::abs(exact - central) / (std::abs(exact) + std::abs(central) + 1e-12));
    }
    probe[k] = point[k];
  }
  return worst;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template std::vector<Tensor<float>> backward(const Tensor<float>&, const std::vector<Tensor<float>>&, bool);
template std::vector<Tensor<double>> backward(const Tensor<double>&, const std::vector<Tensor<double>>&, bool);
template double grad_check(const std::function<Tensor<float>(const std::vector<Tensor<float>>&)>&,
                           const std::vector<Tensor<float>>&, double);
template double grad_check(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>&,
                           const std::vector<Tensor<double>>&, double);

}  // namespace nio
