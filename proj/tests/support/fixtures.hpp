// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

// Small scenes and configs shared by the trainer, CLI and acceptance tests.

#pragma once

#include <filesystem>
#include <string>

#include "splatfit/config.hpp"
#include "splatfit/dataset.hpp"
#include "splatfit/scene_synth.hpp"

namespace splatfit::fixture {

inline SceneConfig small_scene(int frames, int size, std::size_t vertices, std::uint64_t seed) {
  SceneConfig c;
  c.frames = frames;
  c.width = size;
  c.height = size;
  c.vertices = vertices;
  c.seed = seed;
  return c;
}

/// Narrow networks so a step takes milliseconds.
inline TrainConfig small_train() {
  TrainConfig t;
  t.lr_main = 1e-3;
  t.avatar.latent_width = 8;
  t.avatar.feature_width = 16;
  t.avatar.texture_hidden = 24;
  t.avatar.head_hidden = 16;
  t.grid = 4;
  return t;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("splatfit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Dataset make_dataset(const SceneConfig& c, const std::string& name) {
  const auto dir = scratch_dir(name);
  synthesize(c, dir);
  return load_dataset(dir);
}

}  // namespace splatfit::fixture
