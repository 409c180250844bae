// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/dpd.hpp"

#include <algorithm>

#include <stdexcept>

#include "splatfit/encoding.hpp"
#include "splatfit/errors.hpp"

namespace splatfit {

DpdNet::DpdNet(std::size_t sequence_length, DpdConfig config) : config_(config), length_(sequence_length) {
  if (sequence_length == 0) throw std::invalid_argument("dpd: sequence length must be positive");
  const std::size_t e = config.embedding_width;
  encoder = Mlp({encoded_width(1, config.encoding_levels), e}, {Activation::tanh});
  weight_head = Mlp({e, 1}, {Activation::identity});
  bias_head = Mlp({e + kAttributeWidth, config.bias_hidden, kAttributeWidth}, {Activation::relu, Activation::identity});
  Rng rng(config.seed);
  encoder.init_uniform(rng);
  weight_head.init_uniform(rng);
  bias_head.init_uniform(rng);
  weight_head.zero_output_layer();
  weight_head.layers().back().bias[0] = config.weight_init;
}

Tensor DpdNet::temporal_encoding(int frame) const {
  if (frame < 1 || static_cast<std::size_t>(frame) > length_) {
    throw std::invalid_argument("dpd: frame " + std::to_string(frame) + " outside [1, " + std::to_string(length_) + "]");
  }
  return positional_encode(static_cast<double>(frame), config_.encoding_levels, static_cast<double>(length_));
}

Tensor DpdNet::temporal_embed(int frame, MlpTape* tape) const {
  const Tensor gamma = temporal_encoding(frame);
  return encoder.forward(gamma.reshaped({1, gamma.size()}), tape);
}

double DpdNet::temporal_weight(const Tensor& z, MlpTape* tape) const {
  // 2 sigmoid(x) - 1 written as tanh(x / 2), held off +-1 where it rounds there
  const double w = std::tanh(0.5 * weight_head.forward(z, tape)[0]);
  return std::clamp(w, -kMaxTemporalWeight, kMaxTemporalWeight);
}

std::vector<Tensor*> DpdNet::parameters() {
  std::vector<Tensor*> out;
  for (Mlp* m : {&encoder, &weight_head, &bias_head}) {
    for (Tensor* t : m->parameters()) out.push_back(t);
  }
  return out;
}

std::vector<const Tensor*> DpdNet::parameters() const {
  std::vector<const Tensor*> out;
  for (const Mlp* m : {&encoder, &weight_head, &bias_head}) {
    for (const Tensor* t : m->parameters()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> DpdNet::parameter_names() const {
  std::vector<std::string> out;
  const std::pair<const Mlp*, const char*> named[] = {
      {&encoder, "dpd.encoder"}, {&weight_head, "dpd.weight"}, {&bias_head, "dpd.bias"}};
  for (const auto& [m, prefix] : named) {
    for (auto& name : m->parameter_names(prefix)) out.push_back(std::move(name));
  }
  return out;
}

std::size_t DpdNet::parameter_count() const {
  return encoder.parameter_count() + weight_head.parameter_count() + bias_head.parameter_count();
}

void DpdGrads::zero() {
  encoder.zero();
  weight.zero();
  bias.zero();
}

DpdGrads& DpdGrads::operator+=(const DpdGrads& o) {
  encoder += o.encoder;
  weight += o.weight;
  bias += o.bias;
  return *this;
}

std::vector<const Tensor*> DpdGrads::tensors() const {
  std::vector<const Tensor*> out;
  for (const MlpGrads* g : {&encoder, &weight, &bias}) {
    for (const Tensor* t : g->tensors()) out.push_back(t);
  }
  return out;
}

DpdGrads make_dpd_grads(const DpdNet& net) {
  return {net.encoder.make_grads(), net.weight_head.make_grads(), net.bias_head.make_grads()};
}

FrameBias frame_bias(const DpdNet& net, int frame, const GaussianSet& g, bool training, Rng& rng) {
  FrameBias fb;
  fb.frame = frame;
  fb.bias.assign(g.size(), AttributeBias{});
  fb.z = net.temporal_embed(frame, &fb.encoder_tape);
  if (training && rng.uniform() < net.config().dropout) {
    fb.dropped = true;
    return fb;
  }
  fb.omega = net.temporal_weight(fb.z, &fb.weight_tape);

  const std::size_t n = g.size();
  const std::size_t e = fb.z.size();
  Tensor input({n, e + kAttributeWidth});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < e; ++c) input.at(i, c) = fb.z[c];
    const AttributeArray a = g.gaussians[i].flatten();
    for (std::size_t c = 0; c < kAttributeWidth; ++c) input.at(i, e + c) = a[c];
  }
  fb.raw = net.bias_head.forward(input, &fb.bias_tape);
  const double scale = fb.omega * net.config().bias_gain;
  for (std::size_t i = 0; i < n; ++i) {
    AttributeArray a;
    for (std::size_t c = 0; c < kAttributeWidth; ++c) a[c] = scale * fb.raw.at(i, c);
    fb.bias[i] = AttributeBias::unflatten(a);
  }
  return fb;
}

std::vector<GaussianGrad> frame_bias_backward(const DpdNet& net, const FrameBias& fb,
                                              const std::vector<GaussianGrad>& upstream, DpdGrads& grads) {
  const std::size_t n = fb.bias.size();
  if (upstream.size() != n) throw DimensionError("frame_bias_backward: gradient count");
  std::vector<GaussianGrad> dg(n);
  if (fb.dropped) return dg;

  const double gain = net.config().bias_gain;
  const double scale = fb.omega * gain;
  Tensor d_raw({n, kAttributeWidth});
  double d_omega = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const AttributeArray u = upstream[i].flatten();
    for (std::size_t c = 0; c < kAttributeWidth; ++c) {
      d_raw.at(i, c) = scale * u[c];
      d_omega += gain * fb.raw.at(i, c) * u[c];
    }
  }
  const Tensor d_input = net.bias_head.backward(fb.bias_tape, d_raw, grads.bias);
  const std::size_t e = fb.z.size();
  Tensor d_z({1, e});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < e; ++c) d_z[c] += d_input.at(i, c);
    AttributeArray a;
    for (std::size_t c = 0; c < kAttributeWidth; ++c) a[c] = d_input.at(i, e + c);
    dg[i] = GaussianGrad::unflatten(a);
  }
  // omega = 2 s - 1 with s = sigmoid(psi).
  const double s = 0.5 * (fb.omega + 1.0);
  const Tensor d_psi({1, 1}, std::vector<double>{d_omega * 2.0 * s * (1.0 - s)});
  d_z += net.weight_head.backward(fb.weight_tape, d_psi, grads.weight);
  net.encoder.backward(fb.encoder_tape, d_z, grads.encoder);
  return dg;
}

}  // namespace splatfit
