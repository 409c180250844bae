// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splatfit/tensor.hpp"

namespace splatfit {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over a fixed list of named parameter tensors.
class AdamState {
 public:
  AdamState() = default;
  AdamState(std::vector<std::string> names, const std::vector<const Tensor*>& params,
            AdamConfig config);

  /// Throws DimensionError on shape drift and OptimizerError (naming the
  /// parameter) on a non-finite gradient. Parameters are untouched on error.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

  double learning_rate() const noexcept { return config_.learning_rate; }
  void set_learning_rate(double lr) noexcept { config_.learning_rate = lr; }
  const AdamConfig& config() const noexcept { return config_; }
  std::int64_t step_count() const noexcept { return step_; }
  void set_step_count(std::int64_t s) noexcept { step_ = s; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& first_moments() noexcept { return m_; }
  std::vector<Tensor>& second_moments() noexcept { return v_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

}  // namespace splatfit
