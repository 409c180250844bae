// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatfit/articulated_template.hpp"
#include "splatfit/camera.hpp"
#include "splatfit/pao.hpp"
#include "splatfit/scene_synth.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

struct FrameData {
  int index = 0;  // 1-based
  Tensor image;   // H x W x 3, as observed
  Tensor clean;   // H x W x 3, perturbation-free reference
  Tensor entity;  // visible entity pixels
  Tensor occluder;
  Tensor background;
  Tensor silhouette;  // full entity footprint in the clean frame, occluded part included
  std::vector<PoseState> poses;  // per entity, as given to the fitter
  std::vector<std::pair<PerturbationType, double>> perturbations;

  bool perturbed() const { return !perturbations.empty(); }
  /// Largest strength among the frame's perturbations, 0 when clean.
  double strength() const;
  /// Ground-truth regions: entity, occluder and background, empties dropped.
  RegionSet regions() const;
};

/// A synthesized scene loaded fully into memory.
struct Dataset {
  std::filesystem::path root;
  SceneConfig config;
  Camera camera;
  std::vector<Template> templates;  // one per entity
  std::vector<FrameData> frames;    // frames[l - 1]
  std::vector<int> train;
  std::vector<int> test;

  std::size_t entity_count() const { return templates.size(); }
  std::size_t frame_count() const { return frames.size(); }
  const FrameData& frame(int l) const;
};

/// Throws FormatError on a malformed directory.
Dataset load_dataset(const std::filesystem::path& root);

}  // namespace splatfit
