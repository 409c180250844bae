// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "splatfit/tensor.hpp"

namespace splatfit {

/// Sinusoidal encoding. Each input component x expands to
/// [sin(2^k pi x / period), cos(2^k pi x / period)] for k = 0..levels,
/// i.e. 2 * (levels + 1) values, components laid out one after another.
Tensor positional_encode(std::span<const double> x, int levels, double period);
Tensor positional_encode(double x, int levels, double period);

/// Writes the encoding into `out` (size 2 * (levels + 1) * x.size()).
void positional_encode_into(std::span<const double> x, int levels, double period,
                            std::span<double> out);

/// Gradient with respect to x of <upstream, positional_encode(x)>.
std::vector<double> positional_encode_backward(std::span<const double> x, int levels, double period,
                                               std::span<const double> upstream);

constexpr std::size_t encoded_width(std::size_t components, int levels) {
  return components * 2 * static_cast<std::size_t>(levels + 1);
}

}  // namespace splatfit
