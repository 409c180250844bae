// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/avatar_net.hpp"

#include <cmath>

#include "splatfit/encoding.hpp"
#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("hconcat: row mismatch");
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out({n, ca + cb});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out.at(r, c) = a.at(r, c);
    for (std::size_t c = 0; c < cb; ++c) out.at(r, ca + c) = b.at(r, c);
  }
  return out;
}

// Adds columns [first, first + dst.cols()) of src into dst.
void add_columns(const Tensor& src, std::size_t first, Tensor& dst) {
  for (std::size_t r = 0; r < dst.rows(); ++r) {
    for (std::size_t c = 0; c < dst.cols(); ++c) dst.at(r, c) += src.at(r, first + c);
  }
}

Tensor encode_rows(const Tensor& v, int levels, double period) {
  const std::size_t width = encoded_width(3, levels);
  Tensor out({v.rows(), width});
  for (std::size_t r = 0; r < v.rows(); ++r) {
    positional_encode_into(std::span<const double>(v.data() + 3 * r, 3), levels, period,
                           std::span<double>(out.data() + width * r, width));
  }
  return out;
}

std::vector<Activation> hidden_then(std::size_t hidden_layers, Activation last) {
  std::vector<Activation> a(hidden_layers, Activation::relu);
  a.push_back(last);
  return a;
}

}  // namespace

void AvatarGrads::zero() {
  latents.fill(0.0);
  for (MlpGrads* g : {&geometry, &texture, &attribute, &shadow, &offset, &pose}) g->zero();
}

AvatarGrads& AvatarGrads::operator+=(const AvatarGrads& o) {
  latents += o.latents;
  geometry += o.geometry;
  texture += o.texture;
  attribute += o.attribute;
  shadow += o.shadow;
  offset += o.offset;
  pose += o.pose;
  return *this;
}

std::vector<const Tensor*> AvatarGrads::tensors() const {
  std::vector<const Tensor*> out{&latents};
  for (const MlpGrads* g : {&geometry, &texture, &attribute, &shadow, &offset, &pose}) {
    for (const Tensor* t : g->tensors()) out.push_back(t);
  }
  return out;
}

AvatarNet::AvatarNet(const Template& tmpl, AvatarConfig config) : config_(config) {
  const std::size_t n = tmpl.vertex_count();
  const std::size_t f = config.feature_width;
  const std::size_t h = config.head_hidden;
  const std::size_t pe = encoded_width(3, config.encoding_levels);
  edge_ = tmpl.mean_edge_length;
  rest_encoding_ = encode_rows(tmpl.rest_vertices, config.encoding_levels, config.encoding_period);

  geometry_mlp = Mlp({2 * pe, f, f}, hidden_then(1, Activation::identity));
  texture_mlp = Mlp({config.latent_width, config.texture_hidden, config.texture_hidden, f},
                    hidden_then(2, Activation::identity));
  attribute_head = Mlp({2 * f, h, h, kAttributeWidth}, hidden_then(2, Activation::identity));
  shadow_head = Mlp({f, h, h, 1}, hidden_then(2, Activation::sigmoid));
  offset_head = Mlp({f + pe, h, h, 3}, hidden_then(2, Activation::identity));
  pose_head = Mlp({2 * f, h, h, PoseState::flat_width(tmpl.joint_count())}, hidden_then(2, Activation::identity));

  Rng rng(config.seed);
  latents = Tensor({n, config.latent_width});
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.latent_width));
  for (double& v : latents.values()) v = rng.uniform(-bound, bound);
  for (Mlp* m : {&geometry_mlp, &texture_mlp, &attribute_head, &shadow_head, &offset_head, &pose_head}) {
    m->init_uniform(rng);
  }
}

Tensor AvatarNet::encode_vertices(const Tensor& posed, const Tensor& rest_encoding) const {
  return hconcat(encode_rows(posed, config_.encoding_levels, config_.encoding_period), rest_encoding);
}

Features AvatarNet::extract_features(const Tensor& posed_vertices) const {
  posed_vertices.require_shape({vertex_count(), 3}, "extract_features vertices");
  return {geometry_mlp.forward(encode_vertices(posed_vertices, rest_encoding_)), texture_mlp.forward(latents)};
}

TextureStage AvatarNet::texture_stage() const {
  TextureStage s;
  s.texture = texture_mlp.forward(latents, &s.texture_tape);
  s.offset_input = hconcat(s.texture, rest_encoding_);
  s.offsets = offset_head.forward(s.offset_input, &s.offset_tape);
  s.offsets *= config_.offset_gain * edge_;
  return s;
}

Gaussian decode_gaussian(const double* raw, const Vec3& vertex, double edge) {
  Gaussian g;
  g.position = vertex + edge * Vec3(raw[0], raw[1], raw[2]);
  g.opacity = sigmoid(raw[3]);
  const Vec4 q(raw[4] + 1.0, raw[5], raw[6], raw[7]);
  const double qn = q.norm();
  g.rotation = qn > 0.0 ? Vec4(q / qn) : Vec4(1.0, 0.0, 0.0, 0.0);
  for (int k = 0; k < 3; ++k) {
    g.scale[k] = edge * std::exp(raw[8 + k]);
    g.color[k] = sigmoid(raw[11 + k]);
  }
  return g;
}

AvatarFrame AvatarNet::predict(const Template& tmpl, const TextureStage& stage, const PoseState& h) const {
  const std::size_t n = vertex_count();
  AvatarFrame fr;
  PosedMesh rest = pose(tmpl, h, Tensor());
  fr.rest_tape = std::move(rest.tape);
  fr.rest_vertices = std::move(rest.vertices);
  fr.encoding = encode_vertices(fr.rest_vertices, rest_encoding_);
  fr.geometry = geometry_mlp.forward(fr.encoding, &fr.geometry_tape);
  fr.joint = hconcat(fr.geometry, stage.texture);
  fr.raw = attribute_head.forward(fr.joint, &fr.attribute_tape);
  const Tensor xi = shadow_head.forward(fr.geometry, &fr.shadow_tape);
  fr.shadow = xi.reshaped({n});

  fr.pooled = Tensor({1, fr.joint.cols()});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < fr.joint.cols(); ++c) fr.pooled[c] += fr.joint.at(r, c);
  }
  fr.pooled *= 1.0 / static_cast<double>(n);
  const Tensor delta = pose_head.forward(fr.pooled, &fr.pose_tape);
  fr.pose_delta.resize(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) fr.pose_delta[i] = config_.pose_gain * delta[i];
  fr.refined_pose = h + PoseState::unflatten(fr.pose_delta, tmpl.joint_count());

  PosedMesh posed = pose(tmpl, fr.refined_pose, stage.offsets);
  fr.vertices = std::move(posed.vertices);
  fr.refined_tape = std::move(posed.tape);

  fr.gaussians.gaussians.resize(n);
  fr.gaussians.vertex_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 v(fr.vertices.at(i, 0), fr.vertices.at(i, 1), fr.vertices.at(i, 2));
    fr.gaussians.gaussians[i] = decode_gaussian(fr.raw.data() + kAttributeWidth * i, v, edge_);
    fr.gaussians.vertex_index[i] = static_cast<int>(i);
  }
  return fr;
}

void AvatarNet::predict_backward(const Template& tmpl, const AvatarFrame& fr,
                                 const PoseState& h, const AvatarFrameUpstream& up, AvatarGrads& grads,
                                 TextureStageUpstream& stage_grad, std::vector<double>* pose_grad) const {
  const std::size_t n = vertex_count();
  if (up.gaussians.size() != n) throw DimensionError("predict_backward: gaussian gradient count");
  up.shadow.require_shape({n}, "predict_backward shadow gradient");

  Tensor d_raw({n, kAttributeWidth});
  Tensor d_vertices({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = fr.gaussians.gaussians[i];
    const GaussianGrad& dg = up.gaussians[i];
    const double* raw = fr.raw.data() + kAttributeWidth * i;
    double* dr = d_raw.data() + kAttributeWidth * i;
    for (int k = 0; k < 3; ++k) {
      d_vertices.at(i, static_cast<std::size_t>(k)) = dg.position[k];
      dr[k] = edge_ * dg.position[k];
      dr[8 + k] = dg.scale[k] * g.scale[k];
      dr[11 + k] = dg.color[k] * g.color[k] * (1.0 - g.color[k]);
    }
    dr[3] = dg.opacity * g.opacity * (1.0 - g.opacity);
    const Vec4 q(raw[4] + 1.0, raw[5], raw[6], raw[7]);
    const double qn = q.norm();
    if (qn > 0.0) {
      const Vec4 dq = (dg.rotation - g.rotation * g.rotation.dot(dg.rotation)) / qn;
      for (int k = 0; k < 4; ++k) dr[4 + k] = dq[k];
    }
  }

  const PoseGrad pg = pose_backward(tmpl, fr.refined_pose, fr.refined_tape, d_vertices);
  stage_grad.offsets += pg.offsets;

  Tensor d_delta({1, pg.pose.size()});
  for (std::size_t i = 0; i < pg.pose.size(); ++i) d_delta[i] = config_.pose_gain * pg.pose[i];
  const Tensor d_pooled = pose_head.backward(fr.pose_tape, d_delta, grads.pose);

  Tensor d_joint = attribute_head.backward(fr.attribute_tape, d_raw, grads.attribute);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d_joint.cols(); ++c) d_joint.at(r, c) += d_pooled[c] * inv_n;
  }

  const std::size_t f = fr.geometry.cols();
  Tensor d_geometry({n, f});
  add_columns(d_joint, 0, d_geometry);
  add_columns(d_joint, f, stage_grad.texture);
  d_geometry += shadow_head.backward(fr.shadow_tape, up.shadow.reshaped({n, 1}), grads.shadow);
  const Tensor d_encoding = geometry_mlp.backward(fr.geometry_tape, d_geometry, grads.geometry);

  if (pose_grad) {
    const std::size_t pe = encoded_width(3, config_.encoding_levels);
    Tensor d_rest_vertices({n, 3});
    for (std::size_t r = 0; r < n; ++r) {
      const std::span<const double> upstream(d_encoding.data() + r * d_encoding.cols(), pe);
      const std::span<const double> v(fr.rest_vertices.data() + 3 * r, 3);
      const auto dv = positional_encode_backward(v, config_.encoding_levels, config_.encoding_period, upstream);
      for (std::size_t k = 0; k < 3; ++k) d_rest_vertices.at(r, k) = dv[k];
    }
    const PoseGrad rg = pose_backward(tmpl, h, fr.rest_tape, d_rest_vertices);
    pose_grad->assign(pg.pose.size(), 0.0);
    for (std::size_t i = 0; i < pg.pose.size(); ++i) (*pose_grad)[i] = pg.pose[i] + rg.pose[i];
  }
}

void AvatarNet::texture_stage_backward(const TextureStage& stage, const TextureStageUpstream& up,
                                       AvatarGrads& grads) const {
  Tensor d_offsets = up.offsets;
  d_offsets *= config_.offset_gain * edge_;
  const Tensor d_input = offset_head.backward(stage.offset_tape, d_offsets, grads.offset);
  Tensor d_texture = up.texture;
  add_columns(d_input, 0, d_texture);
  grads.latents += texture_mlp.backward(stage.texture_tape, d_texture, grads.texture);
}

AvatarGrads AvatarNet::make_grads() const {
  AvatarGrads g;
  g.latents = Tensor::zeros_like(latents);
  g.geometry = geometry_mlp.make_grads();
  g.texture = texture_mlp.make_grads();
  g.attribute = attribute_head.make_grads();
  g.shadow = shadow_head.make_grads();
  g.offset = offset_head.make_grads();
  g.pose = pose_head.make_grads();
  return g;
}

TextureStageUpstream AvatarNet::make_stage_upstream() const {
  return {Tensor({vertex_count(), config_.feature_width}), Tensor({vertex_count(), 3})};
}

std::vector<Tensor*> AvatarNet::parameters() {
  std::vector<Tensor*> out{&latents};
  for (Mlp* m : {&geometry_mlp, &texture_mlp, &attribute_head, &shadow_head, &offset_head, &pose_head}) {
    for (Tensor* t : m->parameters()) out.push_back(t);
  }
  return out;
}

std::vector<const Tensor*> AvatarNet::parameters() const {
  std::vector<const Tensor*> out{&latents};
  for (const Mlp* m : {&geometry_mlp, &texture_mlp, &attribute_head, &shadow_head, &offset_head, &pose_head}) {
    for (const Tensor* t : m->parameters()) out.push_back(t);
  }
  return out;
}

std::vector<std::string> AvatarNet::parameter_names() const {
  std::vector<std::string> out{"avatar.latents"};
  const std::pair<const Mlp*, const char*> named[] = {
      {&geometry_mlp, "avatar.geometry"}, {&texture_mlp, "avatar.texture"}, {&attribute_head, "avatar.attribute"},
      {&shadow_head, "avatar.shadow"},    {&offset_head, "avatar.offset"},   {&pose_head, "avatar.pose"}};
  for (const auto& [m, prefix] : named) {
    for (auto& name : m->parameter_names(prefix)) out.push_back(std::move(name));
  }
  return out;
}

std::size_t AvatarNet::parameter_count() const {
  std::size_t c = latents.size();
  for (const Mlp* m : {&geometry_mlp, &texture_mlp, &attribute_head, &shadow_head, &offset_head, &pose_head}) {
    c += m->parameter_count();
  }
  return c;
}

std::vector<double> texture_feature_pool(const Tensor& texture) {
  const std::size_t n = texture.rows(), f = texture.cols();
  std::vector<double> mean(f, 0.0);
  if (n == 0) return mean;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) mean[c] += texture.at(r, c);
  }
  for (double& v : mean) v /= static_cast<double>(n);
  return mean;
}

}  // namespace splatfit
