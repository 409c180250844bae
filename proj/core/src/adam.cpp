// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/adam.hpp"

#include <cmath>

#include "splatfit/errors.hpp"

namespace splatfit {

AdamState::AdamState(std::vector<std::string> names, const std::vector<const Tensor*>& params,
                     AdamConfig config)
    : config_(config), names_(std::move(names)) {
  if (names_.size() != params.size()) throw DimensionError("adam: one name per parameter required");
  for (const auto* p : params) {
    m_.push_back(Tensor::zeros_like(*p));
    v_.push_back(Tensor::zeros_like(*p));
  }
}

void AdamState::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("adam: parameter list does not match optimizer state");
  }
  for (std::size_t i = 0; i < m_.size(); ++i) {
    params[i]->require_shape(m_[i].shape(), names_[i].c_str());
    grads[i]->require_shape(m_[i].shape(), names_[i].c_str());
    if (!grads[i]->all_finite()) throw OptimizerError(names_[i], "adam: non-finite gradient in " + names_[i]);
  }
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = config_.learning_rate;
  for (std::size_t i = 0; i < m_.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      if (lr == 0.0) continue;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace splatfit
