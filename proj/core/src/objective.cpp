// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/objective.hpp"

#include <cmath>

#include "splatfit/articulated_template.hpp"
#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double reconstruction_loss(const Tensor& target, const Tensor& render, const Tensor& weights, Tensor* grad_render) {
  render.require_shape(target.shape(), "reconstruction_loss render");
  const std::size_t h = target.dim(0), w = target.dim(1);
  weights.require_shape({h, w}, "reconstruction_loss weights");
  const double inv = 1.0 / static_cast<double>(h * w);
  if (grad_render) *grad_render = Tensor(target.shape());
  double loss = 0.0;
  for (std::size_t p = 0; p < h * w; ++p) {
    const double wp = weights[p];
    if (wp == 0.0) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = render[3 * p + c] - target[3 * p + c];
      s += std::abs(d);
      if (grad_render) (*grad_render)[3 * p + c] = wp * sign(d) * inv;
    }
    loss += wp * s;
  }
  return loss * inv;
}

RegularizerTerms regularizers(const RegularizerInputs& in, const LossWeights& w, RegularizerGrads* grads) {
  const std::size_t n = in.opacity.size();
  if (in.bias.size() != n || in.shadow.size() != n) throw DimensionError("regularizers: per-Gaussian sizes differ");
  RegularizerTerms t;
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  if (grads) {
    grads->bias.assign(n, AttributeBias{});
    grads->shadow.assign(n, 0.0);
    grads->opacity.assign(n, 0.0);
    grads->offsets = in.offsets ? Tensor::zeros_like(*in.offsets) : Tensor();
  }
  for (std::size_t i = 0; i < n; ++i) {
    t.bias += in.bias[i].l1_norm();
    const double dx = in.shadow[i] - 1.0;
    const double dop = in.opacity[i] - 1.0;
    t.shadow += dx * dx;
    t.opacity += dop * dop;
    if (grads) {
      AttributeArray a = in.bias[i].flatten();
      for (double& v : a) v = w.bias * sign(v) * inv_n;
      grads->bias[i] = AttributeBias::unflatten(a);
      grads->shadow[i] = 2.0 * w.shadow * dx * inv_n;
      grads->opacity[i] = 2.0 * w.opacity * dop * inv_n;
    }
  }
  t.bias *= w.bias * inv_n;
  t.shadow *= w.shadow * inv_n;
  t.opacity *= w.opacity * inv_n;
  if (in.offsets && in.neighbors) {
    t.laplacian = w.laplacian * laplacian_energy(*in.offsets, *in.neighbors);
    if (grads) {
      grads->offsets = laplacian_energy_backward(*in.offsets, *in.neighbors);
      grads->offsets *= w.laplacian;
    }
  }
  if (in.weights && !in.weights->empty()) {
    double s = 0.0;
    for (double v : in.weights->values()) s += v;
    t.mask = -w.mask * s / static_cast<double>(in.weights->size());
  }
  return t;
}

double cross_consistency(std::span<const double> a, std::span<const double> b, std::vector<double>* grad_a,
                         std::vector<double>* grad_b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("cross_consistency: feature widths differ");
  const double inv = 1.0 / static_cast<double>(a.size());
  if (grad_a) grad_a->assign(a.size(), 0.0);
  if (grad_b) grad_b->assign(a.size(), 0.0);
  double s = 0.0;
  for (std::size_t f = 0; f < a.size(); ++f) {
    const double d = a[f] - b[f];
    s += std::abs(d);
    if (grad_a) (*grad_a)[f] = sign(d) * inv;
    if (grad_b) (*grad_b)[f] = -sign(d) * inv;
  }
  return s * inv;
}

}  // namespace splatfit
