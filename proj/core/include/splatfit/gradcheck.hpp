// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace splatfit {

/// Evaluates f(x); fills `grad` with df/dx when it is non-empty.
using DifferentiableFn = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates with a kink inside the stencil
};

struct GradcheckOptions {
  double step = 1e-6;
  /// Denominator floor as a fraction of max_i |a_i|.
  double scale_floor = 0.0;
  /// Also difference at step / 4 and skip coordinates whose two estimates
  /// disagree by more than kink_threshold (relative).
  bool kink_guard = false;
  double kink_threshold = 1e-3;
};

/// Central differences against the analytic gradient. Relative error per
/// coordinate is |a - n| / max(floor, |a| + |n|) with
/// floor = max(1e-8, scale_floor * max_i |a_i|).
GradcheckReport gradcheck_report(const DifferentiableFn& f, std::span<const double> x,
                                 const GradcheckOptions& options = {});

double gradcheck(const DifferentiableFn& f, std::span<const double> x, double step = 1e-6);

}  // namespace splatfit
