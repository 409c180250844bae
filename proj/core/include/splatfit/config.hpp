// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "splatfit/avatar_net.hpp"
#include "splatfit/dpd.hpp"
#include "splatfit/objective.hpp"
#include "splatfit/pao.hpp"
#include "splatfit/scene_synth.hpp"

namespace splatfit {

/// Where the target-hand mask y_h comes from: the current render's alpha or
/// the dataset's per-frame silhouette (the alpha of the scene's own render).
enum class HandMask { render, target };

const char* hand_mask_name(HandMask m);
/// Throws std::invalid_argument on an unknown name.
HandMask hand_mask_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 50;
  int batch = 4;
  double lr_main = 1e-4;
  double lr_thresholds = 1e-6;
  double decay = 0.5;
  int decay_every = 5;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
  bool sequential = false;

  bool use_dpd = true;
  bool use_pao = true;
  RegionSource regions = RegionSource::ground_truth;
  HandMask hand_mask = HandMask::target;
  int grid = 8;
  double pao_alpha = 1.0;
  double pao_beta = 1.0;

  LossWeights weights;
  AvatarConfig avatar;
  DpdConfig dpd;

  /// Throws std::invalid_argument on non-positive rates or split fractions
  /// that do not sum to one.
  void validate() const;
  /// lr0 * decay^floor(epoch / decay_every).
  double learning_rate(double lr0, int epoch) const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct RunConfig {
  TrainConfig train;
  SceneConfig scene;
};

/// Reads {"train": {...}, "scene": {...}}. Throws FormatError.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace splatfit
