// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatfit/gradcheck.hpp"

namespace splatfit {

/// Finite-difference result for one differentiable path over several
/// seeded instances.
struct PathCheck {
  std::string path;
  int instances = 0;
  double tolerance = 0.0;
  GradcheckReport worst;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  /// At most 2% of coordinates may sit on a kink.
  bool passed() const {
    return checked > 0 && worst.max_relative_error < tolerance && 50 * skipped <= checked + skipped;
  }
};

inline constexpr double kRendererTolerance = 1e-4;
inline constexpr double kMlpTolerance = 1e-5;

/// Checks the rasterizer, covariance, pose, the four avatar heads, DPD, the
/// PAO thresholds and the objective terms on small random instances.
std::vector<PathCheck> run_gradient_suite(std::uint64_t seed, int instances = 10);

}  // namespace splatfit
