// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "splatfit/articulated_template.hpp"
#include "splatfit/avatar_net.hpp"
#include "splatfit/random.hpp"
#include "splatfit/rasterizer.hpp"

using namespace splatfit;

namespace {

GaussianSet random_scene(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  GaussianSet set;
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian g;
    g.position = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    g.opacity = rng.uniform(0.2, 1.0);
    g.rotation = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    g.scale = Vec3(rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05), rng.uniform(0.01, 0.05));
    g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    set.gaussians.push_back(g);
    set.vertex_index.push_back(static_cast<int>(i));
  }
  return set;
}

Camera bench_camera(int size) {
  return Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), Vec3(0, 1, 0), 1.6 * size, size, size);
}

void BM_Rasterize(benchmark::State& state) {
  const GaussianSet set = random_scene(static_cast<std::size_t>(state.range(0)), 1);
  const Camera cam = bench_camera(static_cast<int>(state.range(1)));
  RenderOptions ro;
  ro.sequential = true;
  for (auto _ : state) benchmark::DoNotOptimize(rasterize(set, cam, ro));
}
BENCHMARK(BM_Rasterize)->Args({512, 64})->Args({2048, 64})->Args({2048, 128});

void BM_RasterizeBackward(benchmark::State& state) {
  const GaussianSet set = random_scene(static_cast<std::size_t>(state.range(0)), 2);
  const Camera cam = bench_camera(static_cast<int>(state.range(1)));
  RenderOptions ro;
  ro.sequential = true;
  const RenderOutput out = rasterize(set, cam, ro);
  Tensor up(out.rgb.shape(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_backward(set, cam, out, up, ro));
}
BENCHMARK(BM_RasterizeBackward)->Args({512, 64})->Args({2048, 64});

void BM_AvatarPredict(benchmark::State& state) {
  TemplateConfig tc;
  tc.vertices = static_cast<std::size_t>(state.range(0));
  const Template tmpl = make_template(tc);
  const AvatarNet net(tmpl, AvatarConfig{});
  const PoseState pose = PoseState::zero(tmpl.joint_count());
  const TextureStage stage = net.texture_stage();
  for (auto _ : state) benchmark::DoNotOptimize(net.predict(tmpl, stage, pose));
}
BENCHMARK(BM_AvatarPredict)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
