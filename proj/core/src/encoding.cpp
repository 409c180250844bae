// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/encoding.hpp"

#include <cmath>
#include <numbers>

#include "splatfit/errors.hpp"

namespace splatfit {

void positional_encode_into(std::span<const double> x, int levels, double period, std::span<double> out) {
  if (levels < 0) throw std::invalid_argument("positional_encode: levels must be >= 0");
  if (!(period > 0.0)) throw std::invalid_argument("positional_encode: period must be > 0");
  if (out.size() != encoded_width(x.size(), levels)) throw DimensionError("positional_encode: output size");
  std::size_t o = 0;
  for (double v : x) {
    double freq = 1.0;
    for (int k = 0; k <= levels; ++k) {
      const double arg = freq * std::numbers::pi * v / period;
      out[o++] = std::sin(arg);
      out[o++] = std::cos(arg);
      freq *= 2.0;
    }
  }
}

std::vector<double> positional_encode_backward(std::span<const double> x, int levels, double period,
                                               std::span<const double> upstream) {
  if (upstream.size() != encoded_width(x.size(), levels)) throw DimensionError("positional_encode_backward: upstream size");
  std::vector<double> dx(x.size(), 0.0);
  std::size_t o = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double freq = 1.0;
    for (int k = 0; k <= levels; ++k) {
      const double w = freq * std::numbers::pi / period;
      const double arg = w * x[i];
      dx[i] += upstream[o++] * w * std::cos(arg);
      dx[i] -= upstream[o++] * w * std::sin(arg);
      freq *= 2.0;
    }
  }
  return dx;
}

Tensor positional_encode(std::span<const double> x, int levels, double period) {
  if (levels < 0) throw std::invalid_argument("positional_encode: levels must be >= 0");
  Tensor out({encoded_width(x.size(), levels)});
  positional_encode_into(x, levels, period, out.values());
  return out;
}

Tensor positional_encode(double x, int levels, double period) {
  const double v[1] = {x};
  return positional_encode(std::span<const double>(v, 1), levels, period);
}

}  // namespace splatfit
