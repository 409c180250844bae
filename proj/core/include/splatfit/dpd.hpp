// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatfit/gaussian.hpp"
#include "splatfit/mlp.hpp"
#include "splatfit/random.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

/// Largest double below one; omega never reaches +-1.
inline constexpr double kMaxTemporalWeight = 1.0 - 0x1p-53;

struct DpdConfig {
  std::size_t embedding_width = 32;
  int encoding_levels = 9;
  std::size_t bias_hidden = 8;
  double bias_gain = 0.1;
  double dropout = 0.3;
  double weight_init = 0.02;  // psi output bias at start
  std::uint64_t seed = 11;
};

/// Per-frame perturbation model: temporal encoder, weight head psi and bias
/// head phi.
class DpdNet {
 public:
  DpdNet() = default;
  DpdNet(std::size_t sequence_length, DpdConfig config);

  const DpdConfig& config() const { return config_; }
  std::size_t sequence_length() const { return length_; }

  /// gamma(l) for 1 <= l <= L. Throws std::invalid_argument otherwise.
  Tensor temporal_encoding(int frame) const;
  /// z_l, 1 x embedding_width.
  Tensor temporal_embed(int frame, MlpTape* tape = nullptr) const;
  /// omega = 2 sigmoid(psi(z)) - 1.
  double temporal_weight(const Tensor& z, MlpTape* tape = nullptr) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  Mlp encoder;
  Mlp weight_head;
  Mlp bias_head;

 private:
  DpdConfig config_;
  std::size_t length_ = 0;
};

struct DpdGrads {
  MlpGrads encoder, weight, bias;

  void zero();
  DpdGrads& operator+=(const DpdGrads& o);
  std::vector<const Tensor*> tensors() const;
};
DpdGrads make_dpd_grads(const DpdNet& net);

struct FrameBias {
  int frame = 0;
  double omega = 0.0;
  bool dropped = false;
  std::vector<AttributeBias> bias;  // one per Gaussian, exactly zero when omega is

  // Tape.
  Tensor z;
  Tensor raw;  // phi output before gating, N x 14
  MlpTape encoder_tape;
  MlpTape weight_tape;
  MlpTape bias_tape;
};

/// delta g_l = omega_l * gain * phi([z_l, g_n]). In training mode one uniform
/// draw decides dropout; the draw happens even when the caller discards it,
/// so the stream position depends only on the number of calls.
FrameBias frame_bias(const DpdNet& net, int frame, const GaussianSet& g, bool training, Rng& rng);

/// Accumulates DPD gradients and returns dL/dg per Gaussian through phi's
/// input.
std::vector<GaussianGrad> frame_bias_backward(const DpdNet& net, const FrameBias& fb,
                                              const std::vector<GaussianGrad>& upstream, DpdGrads& grads);

}  // namespace splatfit
