// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/mlp.hpp"

#include <cmath>

#include <Eigen/Core>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

void activate(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::relu:
      for (auto& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::sigmoid:
      for (auto& x : v) x = sigmoid(x);
      break;
    case Activation::tanh:
      for (auto& x : v) x = std::tanh(x);
      break;
    case Activation::identity:
      break;
  }
}

// Multiplies upstream by the activation derivative expressed via the output.
void activation_backward(Activation a, std::span<const double> y, std::span<double> g) {
  switch (a) {
    case Activation::relu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = y[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
      break;
    case Activation::identity:
      break;
  }
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw FormatError("unknown activation " + name);
}

void MlpGrads::zero() {
  for (auto& w : weight) w.fill(0.0);
  for (auto& b : bias) b.fill(0.0);
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

std::vector<Tensor*> MlpGrads::tensors() {
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    out.push_back(&weight[i]);
    out.push_back(&bias[i]);
  }
  return out;
}

std::vector<const Tensor*> MlpGrads::tensors() const {
  std::vector<const Tensor*> out;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    out.push_back(&weight[i]);
    out.push_back(&bias[i]);
  }
  return out;
}

Mlp::Mlp(std::vector<std::size_t> widths, std::vector<Activation> activations) {
  if (widths.size() < 2 || activations.size() != widths.size() - 1) {
    throw DimensionError("mlp needs n+1 widths for n activations");
  }
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers_.push_back({Tensor({widths[i + 1], widths[i]}), Tensor({widths[i + 1]}), activations[i]});
  }
}

void Mlp::init_uniform(Rng& rng) {
  for (auto& layer : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in()));
    for (auto& w : layer.weight.values()) w = rng.uniform(-bound, bound);
    for (auto& b : layer.bias.values()) b = rng.uniform(-bound, bound);
  }
}

void Mlp::zero_output_layer() {
  if (layers_.empty()) return;
  layers_.back().weight.fill(0.0);
  layers_.back().bias.fill(0.0);
}

std::size_t Mlp::input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
std::size_t Mlp::output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Tensor Mlp::forward(const Tensor& x, MlpTape* tape) const {
  if (layers_.empty()) throw StateError("mlp has no layers");
  if (x.rank() == 0 || x.cols() != input_width()) {
    throw DimensionError("mlp input " + shape_string(x.shape()) + " does not end in width " +
                         std::to_string(input_width()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->outputs.clear();
  }
  const std::size_t rows = x.rows();
  Tensor current = x;
  for (const auto& layer : layers_) {
    Tensor next(with_last(x.shape(), layer.out()));
    ConstMatMap in(current.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(layer.in()));
    ConstMatMap w(layer.weight.data(), static_cast<Eigen::Index>(layer.out()),
                  static_cast<Eigen::Index>(layer.in()));
    ConstVecMap b(layer.bias.data(), static_cast<Eigen::Index>(layer.out()));
    MatMap y(next.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(layer.out()));
    y.noalias() = in * w.transpose();
    y.rowwise() += b.transpose();
    activate(layer.activation, next.values());
    if (tape) {
      tape->inputs.push_back(std::move(current));
      tape->outputs.push_back(next);
    }
    current = std::move(next);
  }
  return current;
}

Tensor Mlp::backward(const MlpTape& tape, const Tensor& upstream, MlpGrads& grads) const {
  if (!tape.recorded() || tape.outputs.size() != layers_.size()) {
    throw StateError("mlp backward called without a recorded forward pass");
  }
  upstream.require_shape(tape.outputs.back().shape(), "mlp upstream");
  if (grads.weight.size() != layers_.size()) grads = make_grads();
  const std::size_t rows = upstream.rows();
  Tensor g = upstream;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    activation_backward(layer.activation, tape.outputs[li].values(), g.values());
    ConstMatMap dz(g.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(layer.out()));
    ConstMatMap in(tape.inputs[li].data(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(layer.in()));
    MatMap dw(grads.weight[li].data(), static_cast<Eigen::Index>(layer.out()),
              static_cast<Eigen::Index>(layer.in()));
    VecMap db(grads.bias[li].data(), static_cast<Eigen::Index>(layer.out()));
    dw.noalias() += dz.transpose() * in;
    db.noalias() += dz.colwise().sum().transpose();
    Tensor dx(tape.inputs[li].shape());
    ConstMatMap w(layer.weight.data(), static_cast<Eigen::Index>(layer.out()),
                  static_cast<Eigen::Index>(layer.in()));
    MatMap dxm(dx.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(layer.in()));
    dxm.noalias() = dz * w;
    g = std::move(dx);
  }
  return g;
}

MlpGrads Mlp::make_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.weight.push_back(Tensor::zeros_like(l.weight));
    g.bias.push_back(Tensor::zeros_like(l.bias));
  }
  return g;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<std::string> Mlp::parameter_names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back(prefix + ".layer" + std::to_string(i) + ".weight");
    out.push_back(prefix + ".layer" + std::to_string(i) + ".bias");
  }
  return out;
}

}  // namespace splatfit
