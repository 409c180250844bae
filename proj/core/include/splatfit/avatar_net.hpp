// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatfit/articulated_template.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/mlp.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

struct AvatarConfig {
  std::size_t latent_width = 33;
  std::size_t feature_width = 64;
  std::size_t texture_hidden = 192;
  std::size_t head_hidden = 64;
  int encoding_levels = 4;
  double encoding_period = 4.0;
  double offset_gain = 0.1;   // in units of the template edge length
  double pose_gain = 0.01;
  std::uint64_t seed = 7;
};

/// Geometry features x_g (N x F) and texture features x_t (N x F).
struct Features {
  Tensor geometry;
  Tensor texture;
};

/// Frame-independent part of the network: texture features and offsets.
struct TextureStage {
  Tensor texture;  // x_t, N x F
  Tensor offsets;  // N x 3
  Tensor offset_input;
  MlpTape texture_tape;
  MlpTape offset_tape;
};

struct AvatarFrame {
  GaussianSet gaussians;  // g, before any bias and before shadowing
  Tensor shadow;          // xi, N
  std::vector<double> pose_delta;
  PoseState refined_pose;  // h + delta h
  Tensor vertices;         // v', N x 3

  // Tape.
  Tensor rest_vertices;  // posed by h without offsets
  Tensor encoding;
  Tensor geometry;  // x_g
  Tensor joint;     // x_g (+) x_t
  Tensor raw;       // head (i) output, N x 14
  Tensor pooled;
  MlpTape geometry_tape;
  MlpTape attribute_tape;
  MlpTape shadow_tape;
  MlpTape pose_tape;
  PoseTape refined_tape;
  PoseTape rest_tape;
};

/// Gradient flowing back into a frame prediction.
struct AvatarFrameUpstream {
  std::vector<GaussianGrad> gaussians;  // w.r.t. g
  Tensor shadow;                        // w.r.t. xi, N
};

struct AvatarGrads {
  Tensor latents;
  MlpGrads geometry, texture, attribute, shadow, offset, pose;

  void zero();
  AvatarGrads& operator+=(const AvatarGrads& o);
  std::vector<const Tensor*> tensors() const;
};

/// Accumulated per-step gradients w.r.t. the frame-independent stage.
struct TextureStageUpstream {
  Tensor texture;  // N x F
  Tensor offsets;  // N x 3
};

class AvatarNet {
 public:
  AvatarNet() = default;
  AvatarNet(const Template& tmpl, AvatarConfig config);

  const AvatarConfig& config() const { return config_; }
  std::size_t vertex_count() const { return latents.rows(); }

  Features extract_features(const Tensor& posed_vertices) const;

  TextureStage texture_stage() const;
  /// Runs heads (i)-(iv) for pose h.
  AvatarFrame predict(const Template& tmpl, const TextureStage& stage, const PoseState& h) const;

  /// Accumulates parameter gradients into `grads` and stage gradients into
  /// `stage_grad`. When `pose_grad` is non-null it receives dL/dh.
  void predict_backward(const Template& tmpl, const AvatarFrame& frame,
                        const PoseState& h, const AvatarFrameUpstream& upstream, AvatarGrads& grads,
                        TextureStageUpstream& stage_grad, std::vector<double>* pose_grad = nullptr) const;

  void texture_stage_backward(const TextureStage& stage, const TextureStageUpstream& upstream,
                              AvatarGrads& grads) const;

  AvatarGrads make_grads() const;
  TextureStageUpstream make_stage_upstream() const;
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;

  Tensor latents;  // N x latent_width
  Mlp geometry_mlp;
  Mlp texture_mlp;
  Mlp attribute_head;
  Mlp shadow_head;
  Mlp offset_head;
  Mlp pose_head;

 private:
  Tensor encode_vertices(const Tensor& posed, const Tensor& rest) const;

  AvatarConfig config_;
  Tensor rest_encoding_;
  double edge_ = 1.0;
};

/// Mean over vertices of x_t.
std::vector<double> texture_feature_pool(const Tensor& texture);

/// Decodes one row of head (i) output onto posed vertex v.
Gaussian decode_gaussian(const double* raw, const Vec3& vertex, double edge);

}  // namespace splatfit
