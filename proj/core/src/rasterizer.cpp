// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "splatfit/parallel.hpp"

namespace splatfit {
namespace {

struct Conic {
  double a, b, c;
};

inline Conic conic_of(const ScreenSplat& s) { return {s.conic(0, 0), s.conic(0, 1), s.conic(1, 1)}; }

inline double falloff_power(const Conic& q, double dx, double dy) {
  return -0.5 * (q.a * dx * dx + q.c * dy * dy) - q.b * dx * dy;
}

// Per-tile partial gradients for one tile-list entry.
struct SplatPartial {
  double mean[2] = {0.0, 0.0};
  double conic[3] = {0.0, 0.0, 0.0};  // d/da, d/db, d/dc
  double opacity = 0.0;
  double color[3] = {0.0, 0.0, 0.0};
};

struct Contribution {
  int slot;
  double alpha;
  double falloff;
  double transmittance;
  double dx, dy;
  bool clamped;
};

}  // namespace

std::optional<ScreenSplat> project(const Gaussian& g, const Camera& cam) {
  ScreenSplat s;
  s.camera_point = cam.to_camera(g.position);
  const double x = s.camera_point.x();
  const double y = s.camera_point.y();
  const double z = s.camera_point.z();
  if (!(z > kNearPlane)) return std::nullopt;
  s.depth = z;
  s.mean = Vec2(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
  const Eigen::Matrix<double, 2, 3> t = j * cam.rotation;
  s.covariance = t * covariance3d(g.rotation, g.scale) * t.transpose();
  s.covariance(0, 0) += kScreenDilation;
  s.covariance(1, 1) += kScreenDilation;
  s.covariance(0, 1) = s.covariance(1, 0) = 0.5 * (s.covariance(0, 1) + s.covariance(1, 0));
  const double det = s.covariance.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
  s.conic << s.covariance(1, 1) / det, -s.covariance(0, 1) / det, -s.covariance(1, 0) / det,
      s.covariance(0, 0) / det;
  return s;
}

PixelBox splat_bounds(const ScreenSplat& s, double opacity) {
  PixelBox box;
  if (!(opacity >= kMinAlpha)) return box;
  const double r2 = 2.0 * std::log(opacity / kMinAlpha);
  const double ex = std::sqrt(std::max(0.0, r2 * s.covariance(0, 0)));
  const double ey = std::sqrt(std::max(0.0, r2 * s.covariance(1, 1)));
  box.x0 = static_cast<int>(std::floor(s.mean.x() - ex)) - 1;
  box.x1 = static_cast<int>(std::ceil(s.mean.x() + ex)) + 1;
  box.y0 = static_cast<int>(std::floor(s.mean.y() - ey)) - 1;
  box.y1 = static_cast<int>(std::ceil(s.mean.y() + ey)) + 1;
  return box;
}

RenderOutput rasterize(const GaussianSet& set, const Camera& cam, const RenderOptions& options) {
  cam.validate();
  const int width = cam.width;
  const int height = cam.height;
  RenderOutput out;
  out.rgb = Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width), 3});
  out.alpha = Tensor({static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  RenderTape& tape = out.tape;
  tape.background = options.background;
  tape.tiles_x = (width + kTileSize - 1) / kTileSize;
  tape.tiles_y = (height + kTileSize - 1) / kTileSize;
  tape.tile_lists.assign(static_cast<std::size_t>(tape.tiles_x * tape.tiles_y), {});
  tape.contributor_end.assign(static_cast<std::size_t>(width * height), 0);
  tape.final_transmittance.assign(static_cast<std::size_t>(width * height), 1.0);

  const std::size_t n = set.size();
  tape.splats.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tape.splats[i] = project(set.gaussians[i], cam);
    if (tape.splats[i]) tape.depth_order.push_back(static_cast<int>(i));
  }
  std::sort(tape.depth_order.begin(), tape.depth_order.end(), [&](int a, int b) {
    const double da = tape.splats[a]->depth;
    const double db = tape.splats[b]->depth;
    return da < db || (da == db && a < b);
  });

  for (int id : tape.depth_order) {
    const auto box = splat_bounds(*tape.splats[id], set.gaussians[id].opacity);
    if (box.empty() || box.x1 < 0 || box.y1 < 0 || box.x0 >= width || box.y0 >= height) continue;
    const int tx0 = std::max(box.x0, 0) / kTileSize;
    const int tx1 = std::min(box.x1, width - 1) / kTileSize;
    const int ty0 = std::max(box.y0, 0) / kTileSize;
    const int ty1 = std::min(box.y1, height - 1) / kTileSize;
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) tape.tile_lists[static_cast<std::size_t>(ty * tape.tiles_x + tx)].push_back(id);
    }
  }

  const Vec3 bg = options.background;
  parallel_for(
      tape.tile_lists.size(),
      [&](std::size_t tile) {
        const auto& list = tape.tile_lists[tile];
        const int tx = static_cast<int>(tile) % tape.tiles_x;
        const int ty = static_cast<int>(tile) / tape.tiles_x;
        for (int py = ty * kTileSize; py < std::min(height, (ty + 1) * kTileSize); ++py) {
          for (int px = tx * kTileSize; px < std::min(width, (tx + 1) * kTileSize); ++px) {
            double t = 1.0;
            double c[3] = {0.0, 0.0, 0.0};
            std::uint32_t end = 0;
            for (std::size_t k = 0; k < list.size(); ++k) {
              const int id = list[k];
              const ScreenSplat& s = *tape.splats[id];
              const Gaussian& g = set.gaussians[id];
              const double dx = px - s.mean.x();
              const double dy = py - s.mean.y();
              const double power = falloff_power(conic_of(s), dx, dy);
              if (power > 0.0) continue;
              const double alpha = std::min(kMaxAlpha, g.opacity * std::exp(power));
              if (alpha < kMinAlpha) continue;
              const double next_t = t * (1.0 - alpha);
              if (next_t < kMinTransmittance) break;
              for (int ch = 0; ch < 3; ++ch) c[ch] += g.color[ch] * alpha * t;
              t = next_t;
              end = static_cast<std::uint32_t>(k + 1);
            }
            const std::size_t pix = static_cast<std::size_t>(py * width + px);
            for (int ch = 0; ch < 3; ++ch) out.rgb[pix * 3 + ch] = c[ch] + t * bg[ch];
            out.alpha[pix] = 1.0 - t;
            tape.contributor_end[pix] = end;
            tape.final_transmittance[pix] = t;
          }
        }
      },
      options.sequential, options.threads);
  return out;
}

std::vector<GaussianGrad> rasterize_backward(const GaussianSet& set, const Camera& cam, const RenderOutput& out,
                                             const Tensor& upstream_rgb, const RenderOptions& options) {
  const int width = cam.width;
  const int height = cam.height;
  upstream_rgb.require_shape(out.rgb.shape(), "rasterize_backward upstream");
  const RenderTape& tape = out.tape;
  const Vec3 bg = tape.background;

  std::vector<std::vector<SplatPartial>> partials(tape.tile_lists.size());
  parallel_for(
      tape.tile_lists.size(),
      [&](std::size_t tile) {
        const auto& list = tape.tile_lists[tile];
        auto& acc = partials[tile];
        acc.assign(list.size(), SplatPartial{});
        const int tx = static_cast<int>(tile) % tape.tiles_x;
        const int ty = static_cast<int>(tile) / tape.tiles_x;
        std::vector<Contribution> contribs;
        for (int py = ty * kTileSize; py < std::min(height, (ty + 1) * kTileSize); ++py) {
          for (int px = tx * kTileSize; px < std::min(width, (tx + 1) * kTileSize); ++px) {
            const std::size_t pix = static_cast<std::size_t>(py * width + px);
            const double dc[3] = {upstream_rgb[pix * 3], upstream_rgb[pix * 3 + 1], upstream_rgb[pix * 3 + 2]};
            if (dc[0] == 0.0 && dc[1] == 0.0 && dc[2] == 0.0) continue;
            // Replay the forward pass to recover per-contribution transmittance.
            contribs.clear();
            double t = 1.0;
            for (std::uint32_t k = 0; k < tape.contributor_end[pix]; ++k) {
              const int id = list[k];
              const ScreenSplat& s = *tape.splats[id];
              const double dx = px - s.mean.x();
              const double dy = py - s.mean.y();
              const double power = falloff_power(conic_of(s), dx, dy);
              if (power > 0.0) continue;
              const double falloff = std::exp(power);
              const double raw = set.gaussians[id].opacity * falloff;
              const double alpha = std::min(kMaxAlpha, raw);
              if (alpha < kMinAlpha) continue;
              contribs.push_back({static_cast<int>(k), alpha, falloff, t, dx, dy, raw > kMaxAlpha});
              t *= 1.0 - alpha;
            }
            double after[3] = {tape.final_transmittance[pix] * bg[0], tape.final_transmittance[pix] * bg[1],
                               tape.final_transmittance[pix] * bg[2]};
            for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
              const int id = list[static_cast<std::size_t>(it->slot)];
              const Gaussian& g = set.gaussians[id];
              auto& p = acc[static_cast<std::size_t>(it->slot)];
              double dalpha = 0.0;
              for (int ch = 0; ch < 3; ++ch) {
                p.color[ch] += it->alpha * it->transmittance * dc[ch];
                dalpha += dc[ch] * (g.color[ch] * it->transmittance - after[ch] / (1.0 - it->alpha));
              }
              for (int ch = 0; ch < 3; ++ch) after[ch] += g.color[ch] * it->alpha * it->transmittance;
              if (it->clamped) continue;
              p.opacity += dalpha * it->falloff;
              const double dpower = dalpha * it->alpha;
              const Conic q = conic_of(*tape.splats[id]);
              p.mean[0] += dpower * (q.a * it->dx + q.b * it->dy);
              p.mean[1] += dpower * (q.c * it->dy + q.b * it->dx);
              p.conic[0] += dpower * (-0.5 * it->dx * it->dx);
              p.conic[1] += dpower * (-it->dx * it->dy);
              p.conic[2] += dpower * (-0.5 * it->dy * it->dy);
            }
          }
        }
      },
      options.sequential, options.threads);

  const std::size_t n = set.size();
  std::vector<SplatPartial> total(n);
  for (std::size_t tile = 0; tile < tape.tile_lists.size(); ++tile) {
    const auto& list = tape.tile_lists[tile];
    for (std::size_t k = 0; k < list.size(); ++k) {
      auto& dst = total[static_cast<std::size_t>(list[k])];
      const auto& src = partials[tile][k];
      for (int i = 0; i < 2; ++i) dst.mean[i] += src.mean[i];
      for (int i = 0; i < 3; ++i) dst.conic[i] += src.conic[i];
      dst.opacity += src.opacity;
      for (int i = 0; i < 3; ++i) dst.color[i] += src.color[i];
    }
  }

  std::vector<GaussianGrad> grads(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        if (!tape.splats[i]) return;
        const ScreenSplat& s = *tape.splats[i];
        const Gaussian& g = set.gaussians[i];
        const SplatPartial& p = total[i];
        GaussianGrad& d = grads[i];
        d.opacity = p.opacity;
        d.color = Vec3(p.color[0], p.color[1], p.color[2]);

        Mat2 dconic;
        dconic << p.conic[0], 0.5 * p.conic[1], 0.5 * p.conic[1], p.conic[2];
        const Mat2 dcov2 = -s.conic * dconic * s.conic;

        const double x = s.camera_point.x();
        const double y = s.camera_point.y();
        const double z = s.camera_point.z();
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / z, 0.0, -cam.fx * x / (z * z), 0.0, cam.fy / z, -cam.fy * y / (z * z);
        const Eigen::Matrix<double, 2, 3> t = j * cam.rotation;
        const Mat3 cov3 = covariance3d(g.rotation, g.scale);
        const Mat3 dcov3 = t.transpose() * dcov2 * t;
        const Eigen::Matrix<double, 2, 3> dt = 2.0 * dcov2 * t * cov3;
        const Eigen::Matrix<double, 2, 3> dj = dt * cam.rotation.transpose();

        const double z2 = z * z;
        const double z3 = z2 * z;
        Vec3 dcam;
        dcam.x() = dj(0, 2) * (-cam.fx / z2) + p.mean[0] * cam.fx / z;
        dcam.y() = dj(1, 2) * (-cam.fy / z2) + p.mean[1] * cam.fy / z;
        dcam.z() = dj(0, 0) * (-cam.fx / z2) + dj(0, 2) * (2.0 * cam.fx * x / z3) + dj(1, 1) * (-cam.fy / z2) +
                   dj(1, 2) * (2.0 * cam.fy * y / z3) - p.mean[0] * cam.fx * x / z2 -
                   p.mean[1] * cam.fy * y / z2;
        d.position = cam.rotation.transpose() * dcam;

        const auto cg = covariance3d_backward(g.rotation, g.scale, dcov3);
        d.rotation = cg.rotation;
        d.scale = cg.scale;
      },
      options.sequential, options.threads);
  return grads;
}

}  // namespace splatfit
