// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatfit/camera.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

inline constexpr double kNearPlane = 1e-4;
/// Isotropic screen-space dilation: a 0.3 pixel standard deviation.
inline constexpr double kScreenDilation = 0.3 * 0.3;
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kMinTransmittance = 1e-4;
inline constexpr int kTileSize = 16;

/// A Gaussian after EWA projection.
struct ScreenSplat {
  Vec3 camera_point = Vec3::Zero();
  Vec2 mean = Vec2::Zero();
  Mat2 covariance = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // covariance inverse
  double depth = 0.0;
};

/// EWA projection at the Gaussian mean. Returns nullopt when the center is
/// at or behind the near plane, or when the screen covariance is singular.
std::optional<ScreenSplat> project(const Gaussian& g, const Camera& cam);

struct RenderOptions {
  Vec3 background = Vec3::Constant(0.5);
  bool sequential = false;
  unsigned threads = 0;
};

/// State kept from the forward pass for rasterize_backward.
struct RenderTape {
  std::vector<std::optional<ScreenSplat>> splats;
  std::vector<int> depth_order;              // visible ids, nearest first, ties by id
  std::vector<std::vector<int>> tile_lists;  // per tile, depth ordered
  std::vector<std::uint32_t> contributor_end;  // per pixel: prefix of its tile list consumed
  std::vector<double> final_transmittance;     // per pixel
  int tiles_x = 0;
  int tiles_y = 0;
  Vec3 background = Vec3::Constant(0.5);
};

struct RenderOutput {
  Tensor rgb;    // H x W x 3
  Tensor alpha;  // H x W
  RenderTape tape;
};

/// Tiled front-to-back compositing. Per pixel, contributions with alpha below
/// kMinAlpha are skipped, alpha is clamped to kMaxAlpha and compositing stops
/// before transmittance would drop under kMinTransmittance. The remaining
/// transmittance blends in the background.
RenderOutput rasterize(const GaussianSet& set, const Camera& cam, const RenderOptions& options = {});

/// Analytic gradients of <upstream_rgb, rgb> for every Gaussian (culled ones
/// get zeros). Per-tile partial sums are reduced in tile order, so threaded
/// and sequential runs agree bitwise.
std::vector<GaussianGrad> rasterize_backward(const GaussianSet& set, const Camera& cam,
                                             const RenderOutput& out, const Tensor& upstream_rgb,
                                             const RenderOptions& options = {});

/// Pixel bounding box (inclusive, unclipped) outside which the splat's alpha
/// is below kMinAlpha. Empty when opacity alone is below kMinAlpha.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool empty() const { return x1 < x0 || y1 < y0; }
};
PixelBox splat_bounds(const ScreenSplat& s, double opacity);

}  // namespace splatfit
