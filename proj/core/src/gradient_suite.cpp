// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>

#include "splatfit/articulated_template.hpp"
#include "splatfit/avatar_net.hpp"
#include "splatfit/camera.hpp"
#include "splatfit/dpd.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/objective.hpp"
#include "splatfit/pao.hpp"
#include "splatfit/random.hpp"
#include "splatfit/rasterizer.hpp"

namespace splatfit {
namespace {

// Coordinates far below the largest gradient are compared on its scale.
GradcheckOptions check_options() {
  GradcheckOptions o;
  o.step = 1e-5;
  o.scale_floor = 1e-3;
  o.kink_guard = true;
  return o;
}

// One scalar inside a parameter tensor.
struct Slot {
  std::size_t tensor = 0;
  std::size_t index = 0;
};

std::vector<Slot> pick_slots(const std::vector<const Tensor*>& tensors, std::size_t per_tensor, Rng& rng) {
  std::vector<Slot> out;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const std::size_t n = tensors[t]->size();
    std::vector<std::size_t> seen;
    while (seen.size() < std::min(per_tensor, n)) {
      const std::size_t i = rng.index(n);
      if (std::find(seen.begin(), seen.end(), i) == seen.end()) seen.push_back(i);
    }
    for (std::size_t i : seen) out.push_back({t, i});
  }
  return out;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Vec4 random_quaternion(Rng& rng) {
  Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q / q.norm();
}

Camera small_camera(int size) {
  return Camera::look_at(Vec3(0.0, 0.0, -3.0), Vec3::Zero(), Vec3(0.0, 1.0, 0.0), 1.6 * size, size, size);
}

GaussianSet random_scene(Rng& rng, int count) {
  GaussianSet set;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.position = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3));
    g.opacity = rng.uniform(0.2, 0.8);
    g.rotation = random_quaternion(rng);
    g.scale = Vec3(rng.uniform(0.06, 0.16), rng.uniform(0.06, 0.16), rng.uniform(0.06, 0.16));
    g.color = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
    set.gaussians.push_back(g);
    set.vertex_index.push_back(i);
  }
  return set;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double attribute_dot(const std::vector<GaussianGrad>& u, const GaussianSet& set) {
  double s = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const AttributeArray a = set.gaussians[i].flatten();
    const AttributeArray b = u[i].flatten();
    for (std::size_t c = 0; c < kAttributeWidth; ++c) s += a[c] * b[c];
  }
  return s;
}

std::vector<GaussianGrad> random_attribute_upstream(std::size_t n, Rng& rng) {
  std::vector<GaussianGrad> u(n);
  for (auto& g : u) {
    AttributeArray a;
    for (double& v : a) v = rng.uniform(-1.0, 1.0);
    g = GaussianGrad::unflatten(a);
  }
  return u;
}

void merge(PathCheck& check, const GradcheckReport& r) {
  const std::size_t checked = check.checked + r.checked;
  const std::size_t skipped = check.skipped + r.skipped;
  if (check.instances == 0 || r.max_relative_error > check.worst.max_relative_error) check.worst = r;
  check.checked = checked;
  check.skipped = skipped;
  ++check.instances;
}

PathCheck check_rasterizer(std::uint64_t seed, int instances) {
  PathCheck check{"rasterizer.attributes", 0, kRendererTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 101 * k);
    const int size = 16;
    const Camera cam = small_camera(size);
    const GaussianSet base = random_scene(rng, 2 + static_cast<int>(rng.index(4)));
    const Tensor upstream = random_tensor({std::size_t(size), std::size_t(size), 3}, rng);
    RenderOptions options;
    options.sequential = true;

    std::vector<double> x;
    for (const auto& g : base.gaussians) {
      const AttributeArray a = g.flatten();
      x.insert(x.end(), a.begin(), a.end());
    }
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      GaussianSet set = base;
      for (std::size_t i = 0; i < set.size(); ++i) {
        AttributeArray a;
        for (std::size_t c = 0; c < kAttributeWidth; ++c) a[c] = p[i * kAttributeWidth + c];
        set.gaussians[i] = Gaussian::unflatten(a);
      }
      const RenderOutput out = rasterize(set, cam, options);
      if (!grad.empty()) {
        const auto g = rasterize_backward(set, cam, out, upstream, options);
        for (std::size_t i = 0; i < set.size(); ++i) {
          const AttributeArray a = g[i].flatten();
          for (std::size_t c = 0; c < kAttributeWidth; ++c) grad[i * kAttributeWidth + c] = a[c];
        }
      }
      return dot(upstream, out.rgb);
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

PathCheck check_covariance(std::uint64_t seed, int instances) {
  PathCheck check{"gaussian.covariance", 0, kRendererTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 211 * k);
    Mat3 upstream;
    for (int i = 0; i < 9; ++i) upstream(i / 3, i % 3) = rng.uniform(-1.0, 1.0);
    const Vec4 q0 = random_quaternion(rng) * rng.uniform(0.5, 2.0);
    std::vector<double> x{q0[0], q0[1], q0[2], q0[3], rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0),
                          rng.uniform(0.05, 1.0)};
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      const Vec4 q(p[0], p[1], p[2], p[3]);
      const Vec3 s(p[4], p[5], p[6]);
      if (!grad.empty()) {
        const CovarianceGrad g = covariance3d_backward(q, s, upstream);
        for (int i = 0; i < 4; ++i) grad[i] = g.rotation[i];
        for (int i = 0; i < 3; ++i) grad[4 + i] = g.scale[i];
      }
      return (covariance3d(q, s).array() * upstream.array()).sum();
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

Template small_template(std::uint64_t seed) {
  TemplateConfig tc;
  tc.vertices = 64;
  tc.seed = seed;
  return make_template(tc);
}

PoseState random_pose(std::size_t joints, Rng& rng, double spread = 0.5) {
  PoseState h = PoseState::zero(joints);
  for (auto& w : h.joint_rotations) w = Vec3(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                                             rng.uniform(-spread, spread));
  for (double& b : h.shape) b = rng.uniform(-1.0, 1.0);
  h.translation = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
  return h;
}

PathCheck check_pose(std::uint64_t seed, int instances) {
  PathCheck check{"template.pose", 0, kRendererTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 307 * k);
    const Template tmpl = small_template(seed + k);
    const std::size_t n = tmpl.vertex_count();
    const std::size_t pw = PoseState::flat_width(tmpl.joint_count());
    const Tensor upstream = random_tensor({n, 3}, rng);
    std::vector<double> x = random_pose(tmpl.joint_count(), rng).flatten();
    for (std::size_t i = 0; i < 3 * n; ++i) x.push_back(rng.uniform(-0.02, 0.02));
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      const PoseState h = PoseState::unflatten(p.subspan(0, pw), tmpl.joint_count());
      Tensor offsets({n, 3}, std::vector<double>(p.begin() + pw, p.end()));
      const PosedMesh m = pose(tmpl, h, offsets);
      if (!grad.empty()) {
        const PoseGrad g = pose_backward(tmpl, h, m.tape, upstream);
        for (std::size_t i = 0; i < pw; ++i) grad[i] = g.pose[i];
        for (std::size_t i = 0; i < 3 * n; ++i) grad[pw + i] = g.offsets[i];
      }
      return dot(upstream, m.vertices);
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

// The avatar heads are checked on a random subset of parameters per tensor.
enum class Head { attribute, shadow, offset, pose };

PathCheck check_avatar(std::uint64_t seed, int instances, Head head) {
  static const char* names[] = {"avatar.attribute_head", "avatar.shadow_head", "avatar.offset_head",
                                "avatar.pose_head"};
  PathCheck check{names[static_cast<int>(head)], 0, kMlpTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 401 * k + 17 * static_cast<int>(head));
    const Template tmpl = small_template(seed + k);
    AvatarConfig ac;
    ac.seed = seed + k;
    ac.texture_hidden = 32;
    ac.feature_width = 16;
    ac.head_hidden = 16;
    ac.offset_gain = 1.0;
    ac.pose_gain = 0.1;
    AvatarNet net(tmpl, ac);
    const PoseState h = random_pose(tmpl.joint_count(), rng);
    const auto gauss_up = random_attribute_upstream(tmpl.vertex_count(), rng);
    const Tensor shadow_up = random_tensor({tmpl.vertex_count()}, rng);
    const bool gaussian_loss = head != Head::shadow;

    // Parameter tensors feeding the head under test.
    std::vector<std::size_t> which;  // indices into net.parameters()
    const std::size_t geometry0 = 1;
    const std::size_t texture0 = geometry0 + net.geometry_mlp.parameters().size();
    const std::size_t attribute0 = texture0 + net.texture_mlp.parameters().size();
    const std::size_t shadow0 = attribute0 + net.attribute_head.parameters().size();
    const std::size_t offset0 = shadow0 + net.shadow_head.parameters().size();
    const std::size_t pose0 = offset0 + net.offset_head.parameters().size();
    const std::size_t end = pose0 + net.pose_head.parameters().size();
    auto range = [&](std::size_t a, std::size_t b) {
      for (std::size_t i = a; i < b; ++i) which.push_back(i);
    };
    switch (head) {
      case Head::attribute: range(0, 1); range(geometry0, texture0); range(attribute0, shadow0); break;
      case Head::shadow: range(geometry0, texture0); range(shadow0, offset0); break;
      case Head::offset: range(texture0, attribute0); range(offset0, pose0); break;
      case Head::pose: range(pose0, end); break;
    }
    std::vector<const Tensor*> all = std::as_const(net).parameters();
    std::vector<const Tensor*> chosen;
    for (std::size_t i : which) chosen.push_back(all[i]);
    const std::vector<Slot> slots = pick_slots(chosen, 3, rng);

    std::vector<double> x;
    for (const Slot& s : slots) x.push_back((*chosen[s.tensor])[s.index]);

    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      AvatarNet local = net;
      std::vector<Tensor*> params = local.parameters();
      for (std::size_t i = 0; i < slots.size(); ++i) (*params[which[slots[i].tensor]])[slots[i].index] = p[i];
      const TextureStage stage = local.texture_stage();
      const AvatarFrame frame = local.predict(tmpl, stage, h);
      const double value =
          gaussian_loss ? attribute_dot(gauss_up, frame.gaussians) : dot(shadow_up, frame.shadow);
      if (!grad.empty()) {
        AvatarFrameUpstream up;
        up.gaussians = gaussian_loss ? gauss_up : std::vector<GaussianGrad>(tmpl.vertex_count());
        up.shadow = gaussian_loss ? Tensor({tmpl.vertex_count()}) : shadow_up;
        AvatarGrads grads = local.make_grads();
        TextureStageUpstream stage_grad = local.make_stage_upstream();
        local.predict_backward(tmpl, frame, h, up, grads, stage_grad);
        local.texture_stage_backward(stage, stage_grad, grads);
        const std::vector<const Tensor*> g = grads.tensors();
        for (std::size_t i = 0; i < slots.size(); ++i) grad[i] = (*g[which[slots[i].tensor]])[slots[i].index];
      }
      return value;
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

PathCheck check_dpd(std::uint64_t seed, int instances) {
  PathCheck check{"dpd.frame_bias", 0, kMlpTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 503 * k);
    const std::size_t length = 20;
    DpdConfig dc;
    dc.seed = seed + k;
    DpdNet net(length, dc);
    Rng init(seed + 7 * k);
    net.weight_head.init_uniform(init);  // the zeroed start would hide the encoder path
    const int frame = 1 + static_cast<int>(rng.index(length));
    const GaussianSet g = random_scene(rng, 4);
    const auto upstream = random_attribute_upstream(g.size(), rng);

    const std::vector<const Tensor*> params = std::as_const(net).parameters();
    const std::vector<Slot> slots = pick_slots(params, 4, rng);
    std::vector<double> x;
    for (const Slot& s : slots) x.push_back((*params[s.tensor])[s.index]);
    const std::size_t np = x.size();
    for (const auto& gs : g.gaussians) {
      const AttributeArray a = gs.flatten();
      x.insert(x.end(), a.begin(), a.end());
    }
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      DpdNet local = net;
      std::vector<Tensor*> lp = local.parameters();
      for (std::size_t i = 0; i < np; ++i) (*lp[slots[i].tensor])[slots[i].index] = p[i];
      GaussianSet set = g;
      for (std::size_t i = 0; i < set.size(); ++i) {
        AttributeArray a;
        for (std::size_t c = 0; c < kAttributeWidth; ++c) a[c] = p[np + i * kAttributeWidth + c];
        set.gaussians[i] = Gaussian::unflatten(a);
      }
      Rng unused(0);
      const FrameBias fb = frame_bias(local, frame, set, false, unused);
      double value = 0.0;
      for (std::size_t i = 0; i < set.size(); ++i) {
        const AttributeArray a = fb.bias[i].flatten();
        const AttributeArray u = upstream[i].flatten();
        for (std::size_t c = 0; c < kAttributeWidth; ++c) value += a[c] * u[c];
      }
      if (!grad.empty()) {
        DpdGrads grads = make_dpd_grads(local);
        const auto dg = frame_bias_backward(local, fb, upstream, grads);
        const std::vector<const Tensor*> gt = grads.tensors();
        for (std::size_t i = 0; i < np; ++i) grad[i] = (*gt[slots[i].tensor])[slots[i].index];
        for (std::size_t i = 0; i < set.size(); ++i) {
          const AttributeArray a = dg[i].flatten();
          for (std::size_t c = 0; c < kAttributeWidth; ++c) grad[np + i * kAttributeWidth + c] = a[c];
        }
      }
      return value;
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

Tensor random_image(std::size_t h, std::size_t w, Rng& rng) { return random_tensor({h, w, 3}, rng, 0.0, 1.0); }

PathCheck check_pao(std::uint64_t seed, int instances) {
  PathCheck check{"pao.thresholds", 0, kMlpTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 601 * k);
    const std::size_t h = 12, w = 12;
    const Tensor target = random_image(h, w, rng);
    const Tensor render = random_image(h, w, rng);
    Tensor hand({h, w});
    for (std::size_t y = 3; y < 9; ++y) {
      for (std::size_t x = 2; x < 10; ++x) hand.at(y, x) = 1.0;
    }
    const RegionSet regions = segment_grid(h, w, 3);
    const double omega = rng.uniform(-0.5, 0.5);
    const Tensor upstream = random_tensor({h, w}, rng);
    PaoParams base;
    base.alpha = rng.uniform(0.5, 2.0);
    base.beta = rng.uniform(0.5, 1.5);
    // Energies are channel sums of |U - U|, mean 1; these land between kinks
    // for most regions and rerolling keeps the check away from them.
    std::vector<double> x{rng.uniform(1.1, 1.6), rng.uniform(0.1, 0.3), rng.uniform(0.8, 1.6)};
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      PaoParams params = base;
      for (int i = 0; i < 3; ++i) params.thresholds[i] = p[i];
      const WeightedMask m = build_mask(target, render, regions, hand, omega, params);
      if (!grad.empty()) {
        const Tensor g = build_mask_backward(m, regions, hand, omega, params, upstream);
        for (int i = 0; i < 3; ++i) grad[i] = g[i];
      }
      return dot(upstream, m.weights);
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

PathCheck check_objective(std::uint64_t seed, int instances) {
  PathCheck check{"objective.terms", 0, kMlpTolerance, {}};
  for (int k = 0; k < instances; ++k) {
    Rng rng(seed + 701 * k);
    const Template tmpl = small_template(seed + k);
    const std::size_t n = tmpl.vertex_count();
    const std::size_t h = 10, w = 10;
    const Tensor target = random_image(h, w, rng);
    const Tensor weights = random_tensor({h, w}, rng, 0.0, 2.0);
    const std::size_t features = 7;
    const std::vector<double> other = [&] {
      std::vector<double> v(features);
      for (double& e : v) e = rng.uniform(-1.0, 1.0);
      return v;
    }();
    LossWeights lw;
    std::vector<double> x;
    // |.| terms are sampled at least 0.05 away from their kinks.
    auto away = [&rng] { return rng.uniform(0.05, 0.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0); };
    for (std::size_t i = 0; i < h * w * 3; ++i) x.push_back(target[i] + away());  // render
    for (std::size_t i = 0; i < n * kAttributeWidth; ++i) x.push_back(away());    // bias
    for (std::size_t i = 0; i < n; ++i) x.push_back(rng.uniform(0.0, 1.0));  // shadow
    for (std::size_t i = 0; i < n; ++i) x.push_back(rng.uniform(0.0, 1.0));  // opacity
    for (std::size_t i = 0; i < n * 3; ++i) x.push_back(rng.uniform(-0.05, 0.05));  // offsets
    for (std::size_t i = 0; i < features; ++i) x.push_back(other[i] + away());

    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      std::size_t at = 0;
      Tensor render({h, w, 3}, std::vector<double>(p.begin(), p.begin() + h * w * 3));
      at += h * w * 3;
      std::vector<AttributeBias> bias(n);
      for (std::size_t i = 0; i < n; ++i) {
        AttributeArray a;
        for (std::size_t c = 0; c < kAttributeWidth; ++c) a[c] = p[at + i * kAttributeWidth + c];
        bias[i] = AttributeBias::unflatten(a);
      }
      at += n * kAttributeWidth;
      std::vector<double> shadow(p.begin() + at, p.begin() + at + n);
      at += n;
      std::vector<double> opacity(p.begin() + at, p.begin() + at + n);
      at += n;
      Tensor offsets({n, 3}, std::vector<double>(p.begin() + at, p.begin() + at + 3 * n));
      at += 3 * n;
      std::vector<double> feat(p.begin() + at, p.begin() + at + features);

      Tensor grad_render;
      double value = reconstruction_loss(target, render, weights, grad.empty() ? nullptr : &grad_render);
      RegularizerInputs in{bias, shadow, opacity, &offsets, &tmpl.neighbors, &weights};
      RegularizerGrads rg;
      value += regularizers(in, lw, grad.empty() ? nullptr : &rg).total();
      std::vector<double> gcross;
      value += lw.cross * cross_consistency(feat, other, grad.empty() ? nullptr : &gcross);
      if (!grad.empty()) {
        at = 0;
        for (std::size_t i = 0; i < h * w * 3; ++i) grad[at++] = grad_render[i];
        for (std::size_t i = 0; i < n; ++i) {
          const AttributeArray a = rg.bias[i].flatten();
          for (std::size_t c = 0; c < kAttributeWidth; ++c) grad[at++] = a[c];
        }
        for (std::size_t i = 0; i < n; ++i) grad[at++] = rg.shadow[i];
        for (std::size_t i = 0; i < n; ++i) grad[at++] = rg.opacity[i];
        for (std::size_t i = 0; i < 3 * n; ++i) grad[at++] = rg.offsets[i];
        for (std::size_t i = 0; i < features; ++i) grad[at++] = lw.cross * gcross[i];
      }
      return value;
    };
    merge(check, gradcheck_report(f, x, check_options()));
  }
  return check;
}

}  // namespace

std::vector<PathCheck> run_gradient_suite(std::uint64_t seed, int instances) {
  return {check_rasterizer(seed, instances),
          check_covariance(seed, instances),
          check_pose(seed, instances),
          check_avatar(seed, instances, Head::attribute),
          check_avatar(seed, instances, Head::shadow),
          check_avatar(seed, instances, Head::offset),
          check_avatar(seed, instances, Head::pose),
          check_dpd(seed, instances),
          check_pao(seed, instances),
          check_objective(seed, instances)};
}

}  // namespace splatfit
