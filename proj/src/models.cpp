// Copyright (c) 2026, The NIO Authors
// SPDX-License-Identifier: Apache-2.0

#include "nio/models.hpp"

#include <Eigen/QR>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

namespace nio {

namespace {

[[noreturn]] void bad_spec(const std::string& msg) { throw Error(ErrorCode::invalid_argument, "model spec: " + msg); }

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_extent(std::string_view s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_spec("bad extent '" + std::string(s) + "'");
  return v;
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::tanh: return "tanh";
    case LayerKind::flatten: return "flatten";
    case LayerKind::bias: return "bias";
  }
  return "?";
}

}  // namespace

std::vector<ParamInfo> param_layout(const ModelSpec& spec) {
  if (spec.input_shape.empty()) bad_spec("empty input shape");
  for (auto e : spec.input_shape)
    if (e == 0) bad_spec("zero input extent");
  if (spec.num_classes == 0) bad_spec("num_classes must be positive");

  std::vector<ParamInfo> out;
  Shape cur = spec.input_shape;
  std::size_t linear_count = 0, conv_count = 0, bias_count = 0;
  std::string last_weighted;
  bool last_has_bias = true;
  auto expect_dims = [](const LayerSpec& l, std::size_t n) {
    if (l.dims.size() != n) bad_spec(std::string(kind_name(l.kind)) + " expects " + std::to_string(n) + " dims");
  };
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::linear: {
        expect_dims(layer, 2);
        const auto fan_in = layer.dims[0], fan_out = layer.dims[1];
        if (fan_in == 0 || fan_out == 0) bad_spec("linear dims must be positive");
        if (cur.size() != 1 || cur[0] != fan_in) {
          bad_spec("linear expects input (" + std::to_string(fan_in) + "), got " + shape_str(cur));
        }
        last_weighted = "fc" + std::to_string(++linear_count);
        last_has_bias = false;
        out.push_back({last_weighted + ".weight", {fan_in, fan_out}, fan_in, fan_out, false});
        cur = {fan_out};
        break;
      }
      case LayerKind::conv2d: {
        expect_dims(layer, 4);
        const auto cin = layer.dims[0], cout = layer.dims[1], k = layer.dims[2], pad = layer.dims[3];
        if (cin == 0 || cout == 0 || k == 0) bad_spec("conv2d dims must be positive");
        if (cur.size() != 3 || cur[0] != cin) {
          bad_spec("conv2d expects (" + std::to_string(cin) + ", H, W), got " + shape_str(cur));
        }
        if (cur[1] + 2 * pad < k || cur[2] + 2 * pad < k) bad_spec("conv2d kernel larger than padded input");
        last_weighted = "conv" + std::to_string(++conv_count);
        last_has_bias = false;
        out.push_back({last_weighted + ".weight", {cout, cin, k, k}, cin * k * k, cout * k * k, false});
        cur = {cout, cur[1] + 2 * pad - k + 1, cur[2] + 2 * pad - k + 1};
        break;
      }
      case LayerKind::bias: {
        expect_dims(layer, 1);
        if (layer.dims[0] != cur[0]) {
          bad_spec("bias of " + std::to_string(layer.dims[0]) + " channels does not match " + shape_str(cur));
        }
        std::string name;
        if (!last_has_bias) {
          name = last_weighted + ".bias";
          last_has_bias = true;
        } else {
          name = "bias" + std::to_string(++bias_count);
        }
        out.push_back({name, {layer.dims[0]}, layer.dims[0], layer.dims[0], true});
        break;
      }
      case LayerKind::relu:
      case LayerKind::tanh:
        expect_dims(layer, 0);
        break;
      case LayerKind::flatten:
        expect_dims(layer, 0);
        cur = {shape_numel(cur)};
        break;
    }
  }
  if (cur.size() != 1 || cur[0] != spec.num_classes) {
    bad_spec("final output " + shape_str(cur) + " does not match " + std::to_string(spec.num_classes) + " classes");
  }
  std::unordered_set<std::string> seen;
  for (const auto& p : out)
    if (!seen.insert(p.name).second) bad_spec("duplicate parameter name " + p.name);
  return out;
}

ModelSpec make_mlp3(const Shape& input_shape, std::size_t num_classes, std::size_t hidden1, std::size_t hidden2) {
  ModelSpec spec;
  spec.name = "mlp3";
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  const auto features = shape_numel(input_shape);
  spec.layers = {
      {LayerKind::flatten, {}},
      {LayerKind::linear, {features, hidden1}},  {LayerKind::bias, {hidden1}}, {LayerKind::relu, {}},
      {LayerKind::linear, {hidden1, hidden2}},   {LayerKind::bias, {hidden2}}, {LayerKind::relu, {}},
      {LayerKind::linear, {hidden2, num_classes}}, {LayerKind::bias, {num_classes}},
  };
  param_layout(spec);
  return spec;
}

ModelSpec make_cnn4(const Shape& input_shape, std::size_t num_classes, std::size_t channels1, std::size_t channels2) {
  if (input_shape.size() != 3) bad_spec("cnn4 needs (C, H, W) inputs, got " + shape_str(input_shape));
  ModelSpec spec;
  spec.name = "cnn4";
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  const auto hw = input_shape[1] * input_shape[2];
  spec.layers = {
      {LayerKind::conv2d, {input_shape[0], channels1, 3, 1}}, {LayerKind::bias, {channels1}}, {LayerKind::relu, {}},
      {LayerKind::conv2d, {channels1, channels2, 3, 1}},      {LayerKind::bias, {channels2}}, {LayerKind::relu, {}},
      {LayerKind::flatten, {}},
      {LayerKind::linear, {channels2 * hw, num_classes}},     {LayerKind::bias, {num_classes}},
  };
  param_layout(spec);
  return spec;
}

ModelSpec parse_model_spec(std::string_view text, const Shape& input_shape, std::size_t num_classes) {
  text = trim(text);
  if (text == "mlp3") return make_mlp3(input_shape, num_classes);
  if (text == "cnn4") return make_cnn4(input_shape, num_classes);
  ModelSpec spec;
  spec.name = "custom";
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  for (auto item : split(text, ',')) {
    auto fields = split(trim(item), ':');
    const auto kind = trim(fields[0]);
    LayerSpec layer{};
    if (kind == "linear") layer.kind = LayerKind::linear;
    else if (kind == "conv2d") layer.kind = LayerKind::conv2d;
    else if (kind == "relu") layer.kind = LayerKind::relu;
    else if (kind == "tanh") layer.kind = LayerKind::tanh;
    else if (kind == "flatten") layer.kind = LayerKind::flatten;
    else if (kind == "bias") layer.kind = LayerKind::bias;
    else bad_spec("unknown layer '" + std::string(kind) + "'");
    for (std::size_t i = 1; i < fields.size(); ++i) layer.dims.push_back(parse_extent(trim(fields[i])));
    spec.layers.push_back(std::move(layer));
  }
  param_layout(spec);
  return spec;
}

std::string format_layers(const ModelSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    os << (i ? "," : "") << kind_name(spec.layers[i].kind);
    for (auto d : spec.layers[i].dims) os << ':' << d;
  }
  return os.str();
}

// ---------------------------------------------------------------------------

template <class T>
void ParamSet<T>::add(std::string name, Tensor<T> tensor) {
  for (const auto& e : entries_)
    if (e.name == name) throw Error(ErrorCode::invalid_argument, "duplicate parameter name " + name);
  entries_.push_back({std::move(name), std::move(tensor)});
}

template <class T>
std::vector<Tensor<T>> ParamSet<T>::tensors() const {
  std::vector<Tensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

template <class T>
std::vector<std::string> ParamSet<T>::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

template <class T>
std::size_t ParamSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

template <class T>
ParamSet<T> ParamSet<T>::with_tensors(const std::vector<Tensor<T>>& tensors) const {
  if (tensors.size() != entries_.size()) {
    throw Error(ErrorCode::invalid_argument, "expected " + std::to_string(entries_.size()) + " tensors, got " +
                                                 std::to_string(tensors.size()));
  }
  ParamSet out;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].shape() != entries_[i].tensor.shape()) {
      throw Error(ErrorCode::shape_mismatch, "tensor for " + entries_[i].name + " has shape " +
                                                 shape_str(tensors[i].shape()) + ", expected " +
                                                 shape_str(entries_[i].tensor.shape()));
    }
    out.entries_.push_back({entries_[i].name, tensors[i]});
  }
  return out;
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "kaiming") return InitScheme::kaiming;
  if (name == "xavier") return InitScheme::xavier;
  if (name == "orthogonal") return InitScheme::orthogonal;
  if (name == "trunc_normal") return InitScheme::trunc_normal;
  throw Error(ErrorCode::invalid_argument, "unknown init scheme '" + std::string(name) + "'");
}

const char* init_scheme_name(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kaiming: return "kaiming";
    case InitScheme::xavier: return "xavier";
    case InitScheme::orthogonal: return "orthogonal";
    case InitScheme::trunc_normal: return "trunc_normal";
  }
  return "?";
}

namespace {

// Orthonormal columns (rows when rows < cols) from the QR factorization of a
// Gaussian matrix, signs fixed by diag(R).
std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto tall = std::max(rows, cols), narrow = std::min(rows, cols);
  Eigen::MatrixXd a(tall, narrow);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(narrow).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      out[i * cols + j] = rows >= cols ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                                       : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    }
  return out;
}

}  // namespace

template <class T>
ParamSet<T> build_params(const ModelSpec& spec, InitScheme scheme, std::uint64_t seed) {
  const auto layout = param_layout(spec);
  std::mt19937_64 rng(seed);
  ParamSet<T> params;
  for (const auto& info : layout) {
    const auto n = shape_numel(info.shape);
    std::vector<double> values(n, 0.0);
    if (!info.is_bias) {
      switch (scheme) {
        case InitScheme::kaiming: {
          std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(info.fan_in)));
          for (auto& v : values) v = normal(rng);
          break;
        }
        case InitScheme::xavier: {
          std::normal_distribution<double> normal(0.0,
                                                  std::sqrt(2.0 / static_cast<double>(info.fan_in + info.fan_out)));
          for (auto& v : values) v = normal(rng);
          break;
        }
        case InitScheme::orthogonal: {
          if (n < 2) throw Error(ErrorCode::invalid_argument, "orthogonal init needs more than one element: " + info.name);
          const auto rows = info.shape[0];
          values = orthogonal_matrix(rows, n / rows, rng);
          break;
        }
        case InitScheme::trunc_normal: {
          constexpr double kStd = 0.02;
          std::normal_distribution<double> normal(0.0, kStd);
          for (auto& v : values) {
            do {
              v = normal(rng);
            } while (std::abs(v) > 2.0 * kStd);
          }
          break;
        }
      }
    }
    params.add(info.name, Tensor<T>(info.shape, std::vector<T>(values.begin(), values.end())));
  }
  return params;
}

template <class T>
Tensor<T> forward_logits(const ModelSpec& spec, const ParamSet<T>& params, const Tensor<T>& inputs) {
  const auto layout = param_layout(spec);
  if (params.size() != layout.size()) {
    throw Error(ErrorCode::shape_mismatch, "model expects " + std::to_string(layout.size()) + " parameter tensors, got " +
                                               std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params[i].tensor.shape() != layout[i].shape) {
      throw Error(ErrorCode::shape_mismatch,
                  params[i].name + " has shape " + shape_str(params[i].tensor.shape()) + ", expected " +
                      shape_str(layout[i].shape));
    }
  }
  Shape expected{0};
  expected.insert(expected.end(), spec.input_shape.begin(), spec.input_shape.end());
  expected[0] = inputs.rank() > 0 ? inputs.shape()[0] : 0;
  if (inputs.shape() != expected) {
    throw Error(ErrorCode::shape_mismatch, "inputs " + shape_str(inputs.shape()) + " do not match per-sample shape " +
                                               shape_str(spec.input_shape));
  }
  const std::size_t batch = inputs.shape()[0];
  Tensor<T> h = inputs;
  std::size_t next = 0;
  for (const auto& layer : spec.layers) {
    switch (layer.kind) {
      case LayerKind::linear: h = matmul(h, params[next++].tensor); break;
      case LayerKind::conv2d: h = conv2d(h, params[next++].tensor, layer.dims[3]); break;
      case LayerKind::bias: h = bias_add(h, params[next++].tensor); break;
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::tanh: h = tanh(h); break;
      case LayerKind::flatten: h = reshape(h, {batch, h.numel() / batch}); break;
    }
  }
  return h;
}

template <class T>
Tensor<T> forward_loss(const ModelSpec& spec, const ParamSet<T>& params, const Tensor<T>& inputs,
                       std::span<const int> labels) {
  if (inputs.rank() == 0 || inputs.shape()[0] != labels.size()) {
    throw Error(ErrorCode::shape_mismatch, "batch of " + shape_str(inputs.shape()) + " does not match " +
                                               std::to_string(labels.size()) + " labels");
  }
  return softmax_cross_entropy(forward_logits(spec, params, inputs), labels);
}

template class ParamSet<float>;
template class ParamSet<double>;
template ParamSet<float> build_params(const ModelSpec&, InitScheme, std::uint64_t);
template ParamSet<double> build_params(const ModelSpec&, InitScheme, std::uint64_t);
template Tensor<float> forward_logits(const ModelSpec&, const ParamSet<float>&, const Tensor<float>&);
template Tensor<double> forward_logits(const ModelSpec&, const ParamSet<double>&, const Tensor<double>&);
template Tensor<float> forward_loss(const ModelSpec&, const ParamSet<float>&, const Tensor<float>&, std::span<const int>);
template Tensor<double> forward_loss(const ModelSpec&, const ParamSet<double>&, const Tensor<double>&,
                                     std::span<const int>);

}  // namespace nio
