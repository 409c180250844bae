// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

// Straight-line re-evaluations used as test oracles. Nothing here calls the
// library code paths it is compared against.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "splatfit/articulated_template.hpp"
#include "splatfit/camera.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/mlp.hpp"
#include "splatfit/rasterizer.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit::oracle {

// ---------------------------------------------------------------- rendering

inline std::array<double, 9> rotation_from_quaternion(const Vec4& q0) {
  const double n = std::sqrt(q0[0] * q0[0] + q0[1] * q0[1] + q0[2] * q0[2] + q0[3] * q0[3]);
  const double w = q0[0] / n, x = q0[1] / n, y = q0[2] / n, z = q0[3] / n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

struct Splat2d {
  int id;
  double depth;
  double mx, my;
  double a, b, c;  // inverse screen covariance [[a b] [b c]]
};

inline bool project_splat(const Gaussian& g, const Camera& cam, int id, Splat2d& out) {
  double pc[3];
  for (int r = 0; r < 3; ++r) {
    pc[r] = cam.translation[r];
    for (int k = 0; k < 3; ++k) pc[r] += cam.rotation(r, k) * g.position[k];
  }
  const double z = pc[2];
  if (!(z > kNearPlane)) return false;
  const auto rot = rotation_from_quaternion(g.rotation);
  double cov[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += rot[3 * i + k] * g.scale[k] * g.scale[k] * rot[3 * j + k];
      cov[i][j] = s;
    }
  }
  const double jac[2][3] = {{cam.fx / z, 0.0, -cam.fx * pc[0] / (z * z)}, {0.0, cam.fy / z, -cam.fy * pc[1] / (z * z)}};
  double t[2][3];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += jac[i][k] * cam.rotation(k, j);
      t[i][j] = s;
    }
  }
  double s2[2][2];
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) s += t[i][k] * cov[k][l] * t[j][l];
      }
      s2[i][j] = s;
    }
  }
  s2[0][0] += kScreenDilation;
  s2[1][1] += kScreenDilation;
  const double off = 0.5 * (s2[0][1] + s2[1][0]);
  const double det = s2[0][0] * s2[1][1] - off * off;
  if (!(det > 0.0) || !std::isfinite(det)) return false;
  out = {id, z, cam.fx * pc[0] / z + cam.cx, cam.fy * pc[1] / z + cam.cy, s2[1][1] / det, -off / det, s2[0][0] / det};
  return true;
}

/// Every pixel composites every projected splat in global depth order.
inline Tensor render(const GaussianSet& set, const Camera& cam, const Vec3& background) {
  std::vector<Splat2d> splats;
  for (std::size_t i = 0; i < set.size(); ++i) {
    Splat2d s;
    if (project_splat(set.gaussians[i], cam, static_cast<int>(i), s)) splats.push_back(s);
  }
  std::sort(splats.begin(), splats.end(),
            [](const Splat2d& p, const Splat2d& q) { return p.depth < q.depth || (p.depth == q.depth && p.id < q.id); });
  const auto h = static_cast<std::size_t>(cam.height), w = static_cast<std::size_t>(cam.width);
  Tensor out({h, w, 3});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double t = 1.0;
      double c[3] = {0.0, 0.0, 0.0};
      for (const Splat2d& s : splats) {
        const double dx = static_cast<double>(x) - s.mx;
        const double dy = static_cast<double>(y) - s.my;
        const double power = -0.5 * (s.a * dx * dx + s.c * dy * dy) - s.b * dx * dy;
        if (power > 0.0) continue;
        const Gaussian& g = set.gaussians[static_cast<std::size_t>(s.id)];
        const double alpha = std::min(kMaxAlpha, g.opacity * std::exp(power));
        if (alpha < kMinAlpha) continue;
        const double next = t * (1.0 - alpha);
        if (next < kMinTransmittance) break;
        for (int ch = 0; ch < 3; ++ch) c[ch] += g.color[ch] * alpha * t;
        t = next;
      }
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, static_cast<std::size_t>(ch)) = c[ch] + t * background[ch];
    }
  }
  return out;
}

// ------------------------------------------------------------------ metrics

/// Mean SSIM over all valid 11 x 11 windows and channels, each window
/// summed directly with 2-D Gaussian weights (sigma 1.5).
inline double windowed_ssim(const Tensor& a, const Tensor& b) {
  constexpr int win = 11;
  double g1[win];
  double norm = 0.0;
  for (int i = 0; i < win; ++i) {
    g1[i] = std::exp(-(i - 5) * (i - 5) / (2.0 * 1.5 * 1.5));
    norm += g1[i];
  }
  const double c1 = 1e-4, c2 = 9e-4;
  const std::size_t h = a.dim(0), w = a.dim(1);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
      for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < win; ++i) {
          for (int j = 0; j < win; ++j) {
            const double wt = g1[i] * g1[j] / (norm * norm);
            const double p = a.at(y0 + i, x0 + j, ch), q = b.at(y0 + i, x0 + j, ch);
            mx += wt * p;
            my += wt * q;
            sxx += wt * p * p;
            syy += wt * q * q;
            sxy += wt * p * q;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

// ------------------------------------------------------- temporal encoding

/// [sin(2^k pi l / L), cos(2^k pi l / L)] for k = 0..K.
inline std::vector<double> frame_encoding(int l, int levels, double length) {
  std::vector<double> out;
  for (int k = 0; k <= levels; ++k) {
    const double arg = std::pow(2.0, k) * std::numbers::pi * l / length;
    out.push_back(std::sin(arg));
    out.push_back(std::cos(arg));
  }
  return out;
}

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::tanh: return std::tanh(v);
    case Activation::identity: return v;
  }
  return v;
}

/// One sample through an Mlp, layer by layer from its raw weights.
inline std::vector<double> mlp_forward(const Mlp& net, std::vector<double> x) {
  for (const DenseLayer& l : net.layers()) {
    std::vector<double> y(l.out());
    for (std::size_t o = 0; o < l.out(); ++o) {
      double s = l.bias[o];
      for (std::size_t i = 0; i < l.in(); ++i) s += l.weight.at(o, i) * x[i];
      y[o] = activate(l.activation, s);
    }
    x = std::move(y);
  }
  return x;
}

// ---------------------------------------------------------------- weighting

struct MaskInputs {
  const Tensor* target;
  const Tensor* render;
  std::vector<const Tensor*> regions;
  const Tensor* hand;
  double omega, alpha, beta, t_energy, t_overlap, t_background;
};

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

inline double region_lambda(double energy, double overlap, double omega, double alpha, double beta, double t_energy,
                            double t_overlap) {
  return alpha * relu(t_energy - energy) * relu(overlap - t_overlap) * (1.0 / std::max(1e-3, 1.0 + beta * omega));
}

/// Per-pixel W from masks, computed pixel by pixel.
inline Tensor weighted_mask(const MaskInputs& in) {
  const std::size_t h = in.target->dim(0), w = in.target->dim(1);
  auto residual = [&](std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += std::abs(in.target->at(y, x, c) - in.render->at(y, x, c));
    return s;
  };
  Tensor out({h, w});
  double hand_area = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) hand_area += in.hand->at(y, x) > 0.5 ? 1.0 : 0.0;
  }
  for (const Tensor* m : in.regions) {
    double err = 0.0, area = 0.0, shared = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (m->at(y, x) <= 0.5) continue;
        err += residual(y, x);
        area += 1.0;
        if (in.hand->at(y, x) > 0.5) shared += 1.0;
      }
    }
    const double energy = area > 0.0 ? err / area : 0.0;
    const double overlap = hand_area > 0.0 ? shared / hand_area : 0.0;
    const double lambda =
        region_lambda(energy, overlap, in.omega, in.alpha, in.beta, in.t_energy, in.t_overlap);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (m->at(y, x) > 0.5) out.at(y, x) += lambda;
      }
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (in.hand->at(y, x) <= 0.5) out.at(y, x) += relu(in.t_background - residual(y, x));
    }
  }
  return out;
}

// ------------------------------------------------------------ regularizers

struct RegularizerOracle {
  double bias, shadow, opacity, laplacian, mask;
};

inline RegularizerOracle regularizer_terms(const std::vector<AttributeArray>& bias, const std::vector<double>& shadow,
                                           const std::vector<double>& opacity, const Tensor& offsets,
                                           const std::vector<std::vector<int>>& neighbors, const Tensor& weights,
                                           double l_bias, double l_shadow, double l_opacity, double l_lap,
                                           double l_mask) {
  const double n = static_cast<double>(opacity.size());
  RegularizerOracle r{0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < opacity.size(); ++i) {
    for (double v : bias[i]) r.bias += std::abs(v);
    r.shadow += (shadow[i] - 1.0) * (shadow[i] - 1.0);
    r.opacity += (opacity[i] - 1.0) * (opacity[i] - 1.0);
  }
  r.bias *= l_bias / n;
  r.shadow *= l_shadow / n;
  r.opacity *= l_opacity / n;
  double lap = 0.0;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    if (neighbors[i].empty()) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (int j : neighbors[i]) m += offsets.at(static_cast<std::size_t>(j), c);
      const double d = offsets.at(i, c) - m / static_cast<double>(neighbors[i].size());
      lap += d * d;
    }
  }
  r.laplacian = l_lap * lap / static_cast<double>(neighbors.size());
  double wsum = 0.0;
  for (double v : weights.values()) wsum += std::abs(v);
  r.mask = -l_mask * wsum / static_cast<double>(weights.size());
  return r;
}

inline double texture_l1(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace splatfit::oracle
