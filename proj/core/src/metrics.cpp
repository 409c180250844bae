// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/metrics.hpp"

#include <cmath>
#include <vector>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Valid-mode separable filtering of one channel.
std::vector<double> filter(const std::vector<double>& img, std::size_t h, std::size_t w,
                           const std::array<double, kSsimWindow>& k) {
  const std::size_t ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) s += k[static_cast<std::size_t>(t)] * img[y * w + x + static_cast<std::size_t>(t)];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) s += k[static_cast<std::size_t>(t)] * rows[(y + static_cast<std::size_t>(t)) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double mean_squared_error(const Tensor& a, const Tensor& b) {
  b.require_shape(a.shape(), "mean_squared_error");
  if (a.empty()) throw DimensionError("mean_squared_error: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b) {
  const double mse = mean_squared_error(a, b);
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  double s = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    s += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= s;
  return k;
}

double ssim(const Tensor& a, const Tensor& b) {
  b.require_shape(a.shape(), "ssim");
  if (a.rank() != 3 || a.dim(2) != 3) throw DimensionError("ssim expects H x W x 3 images");
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (h < kSsimWindow || w < kSsimWindow) throw DimensionError("ssim: image smaller than the 11 x 11 window");
  const auto k = ssim_kernel();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (std::size_t p = 0; p < h * w; ++p) {
      x[p] = a[3 * p + c];
      y[p] = b[3 * p + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter(x, h, w, k), my = filter(y, h, w, k);
    const auto sxx = filter(xx, h, w, k), syy = filter(yy, h, w, k), sxy = filter(xy, h, w, k);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace splatfit
