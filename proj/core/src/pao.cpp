// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/pao.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

double relu(double x) { return x > 0.0 ? x : 0.0; }
double step(double x) { return x > 0.0 ? 1.0 : 0.0; }

double denominator(double omega, const PaoParams& p) { return std::max(kMinWeightDenominator, 1.0 + p.beta * omega); }

}  // namespace

const char* region_source_name(RegionSource s) { return s == RegionSource::grid ? "grid" : "ground-truth"; }

RegionSource region_source_from_name(const std::string& name) {
  if (name == "grid") return RegionSource::grid;
  if (name == "ground-truth") return RegionSource::ground_truth;
  throw std::invalid_argument("unknown region source '" + name + "'");
}

void RegionSet::add(std::string name, Tensor mask) {
  if (!masks.empty()) mask.require_shape(masks.front().shape(), "region mask");
  bool any = false;
  for (double v : mask.values()) any = any || v > 0.5;
  if (!any) return;
  masks.push_back(std::move(mask));
  names.push_back(std::move(name));
}

RegionSet segment_grid(std::size_t height, std::size_t width, int g) {
  if (g < 1) throw std::invalid_argument("segment_grid: g must be >= 1");
  RegionSet set;
  set.source = RegionSource::grid;
  const auto gg = static_cast<std::size_t>(g);
  for (std::size_t ty = 0; ty < gg; ++ty) {
    for (std::size_t tx = 0; tx < gg; ++tx) {
      Tensor m({height, width});
      for (std::size_t y = ty * height / gg; y < (ty + 1) * height / gg; ++y) {
        for (std::size_t x = tx * width / gg; x < (tx + 1) * width / gg; ++x) m.at(y, x) = 1.0;
      }
      set.add("tile_" + std::to_string(ty) + "_" + std::to_string(tx), std::move(m));
    }
  }
  return set;
}

PaoParams PaoParams::defaults(std::size_t entities) {
  PaoParams p;
  if (entities > 1) p.thresholds[2] = 10.0;
  return p;
}

double region_weight(double energy, double overlap, double omega, const PaoParams& params) {
  return params.alpha * relu(params.energy_threshold() - energy) * relu(overlap - params.overlap_threshold()) /
         denominator(omega, params);
}

Tensor pixel_residual(const Tensor& target, const Tensor& render) {
  render.require_shape(target.shape(), "pixel_residual");
  const std::size_t h = target.dim(0), w = target.dim(1);
  Tensor r({h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += std::abs(target[3 * p + c] - render[3 * p + c]);
    r[p] = s;
  }
  return r;
}

double region_energy(const Tensor& target, const Tensor& render, const Tensor& mask) {
  const Tensor r = pixel_residual(target, render);
  mask.require_shape(r.shape(), "region_energy mask");
  double sum = 0.0, count = 0.0;
  for (std::size_t p = 0; p < r.size(); ++p) {
    if (mask[p] > 0.5) {
      sum += r[p];
      count += 1.0;
    }
  }
  return count > 0.0 ? sum / count : 0.0;
}

double region_overlap(const Tensor& mask, const Tensor& hand) {
  hand.require_shape(mask.shape(), "region_overlap");
  double both = 0.0, area = 0.0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (hand[p] > 0.5) {
      area += 1.0;
      if (mask[p] > 0.5) both += 1.0;
    }
  }
  return area > 0.0 ? both / area : 0.0;
}

WeightedMask build_mask(const Tensor& target, const Tensor& render, const RegionSet& regions, const Tensor& hand,
                        double omega, const PaoParams& params) {
  WeightedMask out;
  out.residual = pixel_residual(target, render);
  hand.require_shape(out.residual.shape(), "build_mask hand mask");
  out.weights = Tensor(out.residual.shape());
  for (const Tensor& m : regions.masks) {
    m.require_shape(out.residual.shape(), "build_mask region");
    RegionStats st;
    double sum = 0.0, count = 0.0;
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p] > 0.5) {
        sum += out.residual[p];
        count += 1.0;
      }
    }
    st.energy = count > 0.0 ? sum / count : 0.0;
    st.overlap = region_overlap(m, hand);
    st.lambda = region_weight(st.energy, st.overlap, omega, params);
    if (st.lambda != 0.0) {
      for (std::size_t p = 0; p < m.size(); ++p) {
        if (m[p] > 0.5) out.weights[p] += st.lambda;
      }
    }
    out.regions.push_back(st);
  }
  const double tb = params.background_threshold();
  for (std::size_t p = 0; p < out.weights.size(); ++p) {
    if (hand[p] <= 0.5) out.weights[p] += relu(tb - out.residual[p]);
  }
  return out;
}

Tensor build_mask_backward(const WeightedMask& mask, const RegionSet& regions, const Tensor& hand, double omega,
                           const PaoParams& params, const Tensor& upstream) {
  upstream.require_shape(mask.weights.shape(), "build_mask_backward upstream");
  if (mask.regions.size() != regions.size()) throw DimensionError("build_mask_backward: region count");
  Tensor g({3});
  const double den = denominator(omega, params);
  for (std::size_t u = 0; u < regions.size(); ++u) {
    const Tensor& m = regions.masks[u];
    const RegionStats& st = mask.regions[u];
    double up = 0.0;
    for (std::size_t p = 0; p < m.size(); ++p) {
      if (m[p] > 0.5) up += upstream[p];
    }
    const double a = params.energy_threshold() - st.energy;
    const double b = st.overlap - params.overlap_threshold();
    g[0] += up * params.alpha * step(a) * relu(b) / den;
    g[1] -= up * params.alpha * relu(a) * step(b) / den;
  }
  const double tb = params.background_threshold();
  for (std::size_t p = 0; p < upstream.size(); ++p) {
    if (hand[p] <= 0.5) g[2] += upstream[p] * step(tb - mask.residual[p]);
  }
  return g;
}

}  // namespace splatfit
