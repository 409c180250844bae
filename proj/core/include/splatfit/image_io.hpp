// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "splatfit/tensor.hpp"

namespace splatfit {

/// value in [0, 1] -> byte, clamped, scaled by 255 and rounded half up.
std::uint8_t quantize_unit(double v);

/// Writes an 8-bit PNG. H x W x 3 tensors become RGB, H x W tensors gray.
void save_png(const std::filesystem::path& path, const Tensor& image);

/// Reads an 8-bit gray or RGB PNG back into [0, 1] values.
Tensor load_png(const std::filesystem::path& path);

/// Maps nonnegative weights to a blue-to-yellow ramp, normalized by `max_value`
/// (the tensor maximum when max_value <= 0).
Tensor false_color(const Tensor& weights, double max_value = 0.0);

}  // namespace splatfit
