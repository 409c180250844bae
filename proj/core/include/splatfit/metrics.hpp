// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "splatfit/tensor.hpp"

namespace splatfit {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

double mean_squared_error(const Tensor& a, const Tensor& b);

/// 10 log10(1 / MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const Tensor& a, const Tensor& b);

/// Normalized 11-tap Gaussian, sigma 1.5.
std::array<double, kSsimWindow> ssim_kernel();

/// Mean SSIM over all valid 11 x 11 windows and the three channels of
/// H x W x 3 images in [0, 1]. Throws DimensionError on shape mismatch or
/// when a side is shorter than the window.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace splatfit
