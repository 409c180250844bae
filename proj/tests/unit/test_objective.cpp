// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "splatfit/articulated_template.hpp"
#include "splatfit/errors.hpp"
#include "splatfit/metrics.hpp"
#include "splatfit/objective.hpp"
#include "splatfit/random.hpp"

using namespace splatfit;

namespace {

Tensor random_image(Rng& rng, std::size_t h, std::size_t w) {
  Tensor t({h, w, 3});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

LossWeights only_mask(double l) {
  LossWeights w;
  w.bias = w.shadow = w.opacity = w.laplacian = w.cross = 0.0;
  w.mask = l;
  return w;
}

}  // namespace

TEST_CASE("psnr") {
  Rng rng(1);
  const Tensor a = random_image(rng, 16, 16);
  Tensor b({16, 16, 3}, 0.0), c({16, 16, 3}, 0.5);
  CHECK(psnr(b, c) == doctest::Approx(6.0206).epsilon(1e-5));
  CHECK(psnr(a, a) == 100.0);
  CHECK(mean_squared_error(b, c) == 0.25);
  CHECK_THROWS_AS(psnr(a, Tensor({16, 15, 3})), DimensionError);
}

TEST_CASE("ssim") {
  Rng rng(2);
  const Tensor a = random_image(rng, 20, 24);
  CHECK(ssim(a, a) == 1.0);
  double kernel_sum = 0.0;
  for (double k : ssim_kernel()) kernel_sum += k;
  CHECK(kernel_sum == doctest::Approx(1.0).epsilon(1e-15));
  for (int k = 0; k < 10; ++k) {
    const Tensor x = random_image(rng, 16 + rng.index(16), 16 + rng.index(16));
    Tensor y = x;
    for (double& v : y.values()) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
    CHECK(std::abs(ssim(x, y) - oracle::windowed_ssim(x, y)) <= 1e-6);
    CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-12));
    CHECK(ssim(x, y) < 1.0);
  }
  CHECK_THROWS_AS(ssim(Tensor({8, 8, 3}), Tensor({8, 8, 3})), DimensionError);
}

TEST_CASE("weighted reconstruction") {
  Rng rng(3);
  const Tensor t = random_image(rng, 5, 6), r = random_image(rng, 5, 6);
  Tensor w({5, 6});
  for (double& v : w.values()) v = rng.uniform();
  double want = 0.0;
  for (std::size_t p = 0; p < 30; ++p) {
    for (std::size_t c = 0; c < 3; ++c) want += w[p] * std::abs(t[3 * p + c] - r[3 * p + c]);
  }
  want /= 30.0;
  Tensor grad;
  CHECK(reconstruction_loss(t, r, w, &grad) == doctest::Approx(want).epsilon(1e-14));
  for (std::size_t p = 0; p < 30; ++p) {
    const double sgn = r[3 * p] > t[3 * p] ? 1.0 : -1.0;
    CHECK(grad[3 * p] == doctest::Approx(sgn * w[p] / 30.0));
  }
  CHECK(reconstruction_loss(t, r, Tensor({5, 6}, 0.0)) == 0.0);
}

TEST_CASE("mask reward") {
  const Tensor ones({4, 4}, 1.0);
  RegularizerInputs in;
  in.weights = &ones;
  CHECK(regularizers(in, only_mask(0.5)).total() == -0.5);

  Rng rng(4);
  Tensor w({7, 9});
  for (double& v : w.values()) v = 2.0 * rng.uniform();
  in.weights = &w;
  double mean = 0.0;
  for (double v : w.values()) mean += v;
  mean /= static_cast<double>(w.size());
  LossWeights lw;
  const double base = regularizers(in, lw).total();
  LossWeights doubled = lw;
  doubled.mask *= 2.0;
  CHECK(regularizers(in, doubled).total() == doctest::Approx(base - lw.mask * mean).epsilon(1e-14));
}

TEST_CASE("regularizers match the oracle") {
  const Template t = make_template(TemplateConfig{60, 6, 6, 3});
  for (int k = 0; k < 20; ++k) {
    Rng rng(50 + k);
    const std::size_t n = t.vertex_count();
    std::vector<AttributeBias> bias(n);
    std::vector<AttributeArray> raw(n);
    std::vector<double> shadow(n), opacity(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : raw[i]) v = rng.normal();
      bias[i] = AttributeBias::unflatten(raw[i]);
      shadow[i] = rng.uniform();
      opacity[i] = rng.uniform();
    }
    Tensor offsets({n, 3}), w({8, 8});
    for (double& v : offsets.values()) v = rng.normal();
    for (double& v : w.values()) v = rng.uniform();
    LossWeights lw;
    lw.bias = rng.uniform();
    lw.shadow = rng.uniform();
    lw.opacity = rng.uniform();
    lw.laplacian = rng.uniform();
    lw.mask = rng.uniform();
    const RegularizerInputs in{bias, shadow, opacity, &offsets, &t.neighbors, &w};
    const RegularizerTerms got = regularizers(in, lw);
    const auto want = oracle::regularizer_terms(raw, shadow, opacity, offsets, t.neighbors, w, lw.bias, lw.shadow,
                                                lw.opacity, lw.laplacian, lw.mask);
    CHECK(std::abs(got.bias - want.bias) <= 1e-10);
    CHECK(std::abs(got.shadow - want.shadow) <= 1e-10);
    CHECK(std::abs(got.opacity - want.opacity) <= 1e-10);
    CHECK(std::abs(got.laplacian - want.laplacian) <= 1e-10);
    CHECK(std::abs(got.mask - want.mask) <= 1e-10);
  }
}

TEST_CASE("cross consistency") {
  Rng rng(6);
  std::vector<double> a(64), b(64);
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  std::vector<double> ga, gb;
  CHECK(cross_consistency(a, b, &ga, &gb) == doctest::Approx(oracle::texture_l1(a, b)).epsilon(1e-14));
  CHECK(cross_consistency(a, a) == 0.0);
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(ga[i] == -gb[i]);
    CHECK(std::abs(ga[i]) == doctest::Approx(1.0 / 64.0));
  }
}
