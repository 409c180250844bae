// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace splatfit {

namespace {

double central(const DifferentiableFn& f, std::vector<double>& point, std::size_t i, double step) {
  const double orig = point[i];
  point[i] = orig + step;
  const double fp = f(point, {});
  point[i] = orig - step;
  const double fm = f(point, {});
  point[i] = orig;
  return (fp - fm) / (2.0 * step);
}

}  // namespace

GradcheckReport gradcheck_report(const DifferentiableFn& f, std::span<const double> x,
                                 const GradcheckOptions& options) {
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> analytic(point.size(), 0.0);
  f(point, analytic);
  double largest = 0.0;
  for (double a : analytic) largest = std::max(largest, std::abs(a));
  const double floor = std::max(1e-8, options.scale_floor * largest);
  auto relative = [floor](double a, double b) { return std::abs(a - b) / std::max(floor, std::abs(a) + std::abs(b)); };

  GradcheckReport report;
  bool first = true;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double numeric = central(f, point, i, options.step);
    if (options.kink_guard) {
      const double fine = central(f, point, i, 0.25 * options.step);
      if (relative(numeric, fine) > options.kink_threshold) {
        ++report.skipped;
        continue;
      }
    }
    ++report.checked;
    const double err = relative(analytic[i], numeric);
    if (first || err > report.max_relative_error) {
      first = false;
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

double gradcheck(const DifferentiableFn& f, std::span<const double> x, double step) {
  GradcheckOptions options;
  options.step = step;
  return gradcheck_report(f, x, options).max_relative_error;
}

}  // namespace splatfit
