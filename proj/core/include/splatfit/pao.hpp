// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "splatfit/tensor.hpp"

namespace splatfit {

enum class RegionSource { ground_truth, grid };

const char* region_source_name(RegionSource s);
RegionSource region_source_from_name(const std::string& name);

/// Binary H x W masks; overlap is allowed, empty masks are not.
struct RegionSet {
  std::vector<Tensor> masks;
  std::vector<std::string> names;
  RegionSource source = RegionSource::ground_truth;

  std::size_t size() const { return masks.size(); }
  /// Appends a mask unless it is empty. Throws DimensionError on shape drift.
  void add(std::string name, Tensor mask);
};

/// Regular g x g tiling of an H x W image. Tiles that would be empty (g
/// larger than a side) are dropped. Throws std::invalid_argument for g < 1.
RegionSet segment_grid(std::size_t height, std::size_t width, int g);

/// Learnable thresholds (T_E, T_mu, T_b) plus the fixed scaling factors.
struct PaoParams {
  double alpha = 1.0;
  double beta = 1.0;
  Tensor thresholds = Tensor({3}, std::vector<double>{1.0, 0.3, 3.0});

  double energy_threshold() const { return thresholds[0]; }
  double overlap_threshold() const { return thresholds[1]; }
  double background_threshold() const { return thresholds[2]; }

  static PaoParams defaults(std::size_t entities);
};

inline constexpr double kMinWeightDenominator = 1e-3;

/// alpha relu(T_E - E) relu(mu - T_mu) / max(1e-3, 1 + beta omega).
double region_weight(double energy, double overlap, double omega, const PaoParams& params);

struct RegionStats {
  double energy = 0.0;
  double overlap = 0.0;
  double lambda = 0.0;
};

/// Mean per-pixel channel-sum l1 residual over the mask.
double region_energy(const Tensor& target, const Tensor& render, const Tensor& mask);
/// |mask and hand| / |hand|, 0 for an empty hand mask.
double region_overlap(const Tensor& mask, const Tensor& hand);
/// Channel-sum l1 residual per pixel, H x W.
Tensor pixel_residual(const Tensor& target, const Tensor& render);

struct WeightedMask {
  Tensor weights;  // H x W, >= 0
  std::vector<RegionStats> regions;
  Tensor residual;  // channel-sum l1, H x W
};

/// W = sum_u lambda_u y_u + (1 - y_h) relu(T_b - residual). Residuals are
/// constants for differentiation.
WeightedMask build_mask(const Tensor& target, const Tensor& render, const RegionSet& regions,
                        const Tensor& hand, double omega, const PaoParams& params);

/// Gradient of <upstream, W> with respect to (T_E, T_mu, T_b).
Tensor build_mask_backward(const WeightedMask& mask, const RegionSet& regions, const Tensor& hand,
                           double omega, const PaoParams& params, const Tensor& upstream);

}  // namespace splatfit
