// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "splatfit/gaussian.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

struct LossWeights {
  double bias = 0.1;
  double shadow = 0.001;
  double opacity = 0.1;
  double laplacian = 0.1;
  double mask = 0.5;
  double cross = 0.1;
};

/// mean over pixels of W * sum_c |target - render|. When `grad_render` is
/// non-null it receives dL/drender (H x W x 3); W is a constant.
double reconstruction_loss(const Tensor& target, const Tensor& render, const Tensor& weights,
                           Tensor* grad_render = nullptr);

struct RegularizerTerms {
  double bias = 0.0;
  double shadow = 0.0;
  double opacity = 0.0;
  double laplacian = 0.0;
  double mask = 0.0;  // already negated

  double total() const { return bias + shadow + opacity + laplacian + mask; }
};

/// Inputs of the point-wise and mask regularizers for one frame.
struct RegularizerInputs {
  std::span<const AttributeBias> bias;
  std::span<const double> shadow;
  std::span<const double> opacity;
  const Tensor* offsets = nullptr;  // N x 3, may be null
  const std::vector<std::vector<int>>* neighbors = nullptr;
  const Tensor* weights = nullptr;  // W, may be null
};

struct RegularizerGrads {
  std::vector<AttributeBias> bias;
  std::vector<double> shadow;
  std::vector<double> opacity;
  Tensor offsets;
};

/// sum_n [l_bias |dg_n|_1 + l_xi (xi_n - 1)^2 + l_o (o_n - 1)^2] / N
///   + l_lap laplacian(offsets) - l_W mean(W).
RegularizerTerms regularizers(const RegularizerInputs& in, const LossWeights& w, RegularizerGrads* grads = nullptr);

/// mean_f |a_f - b_f|.
double cross_consistency(std::span<const double> a, std::span<const double> b, std::vector<double>* grad_a = nullptr,
                         std::vector<double>* grad_b = nullptr);

struct LossReport {
  double total = 0.0;
  double reconstruction = 0.0;
  RegularizerTerms regularizer;
  double cross = 0.0;
  std::vector<int> frames;
  std::vector<double> omega;
  double mean_weight = 0.0;
  /// Supervision mask W per frame, batch order.
  std::vector<Tensor> masks;

  /// reconstruction + regularizer terms + cross.
  double sum_of_parts() const { return reconstruction + regularizer.total() + cross; }
};

}  // namespace splatfit
