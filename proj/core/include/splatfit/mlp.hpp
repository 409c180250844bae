// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "splatfit/random.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

enum class Activation { relu, sigmoid, tanh, identity };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // out
  Activation activation = Activation::identity;

  std::size_t in() const { return weight.dim(1); }
  std::size_t out() const { return weight.dim(0); }
};

/// Per-call record of layer inputs and outputs. Holding it outside the Mlp
/// lets several forward passes share one network concurrently.
struct MlpTape {
  std::vector<Tensor> inputs;
  std::vector<Tensor> outputs;
  bool recorded() const noexcept { return !outputs.empty(); }
};

/// Parameter gradients laid out like the layers of an Mlp.
struct MlpGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;

  void zero();
  MlpGrads& operator+=(const MlpGrads& other);
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

/// Fully connected network applied row-wise: every row of the input is one
/// sample, the last dimension is the feature dimension.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}; one activation per layer.
  Mlp(std::vector<std::size_t> widths, std::vector<Activation> activations);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void init_uniform(Rng& rng);
  void zero_output_layer();

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t parameter_count() const;
  std::size_t layer_count() const { return layers_.size(); }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Throws DimensionError if x's last dimension is not input_width().
  Tensor forward(const Tensor& x, MlpTape* tape = nullptr) const;

  /// Accumulates parameter gradients into `grads` and returns dL/dx.
  /// Throws StateError if `tape` was not filled by forward().
  Tensor backward(const MlpTape& tape, const Tensor& upstream, MlpGrads& grads) const;

  MlpGrads make_grads() const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;

 private:
  std::vector<DenseLayer> layers_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace splatfit
