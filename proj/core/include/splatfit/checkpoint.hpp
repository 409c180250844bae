// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "splatfit/adam.hpp"
#include "splatfit/articulated_template.hpp"
#include "splatfit/avatar_net.hpp"
#include "splatfit/config.hpp"
#include "splatfit/dpd.hpp"
#include "splatfit/pao.hpp"
#include "splatfit/random.hpp"

namespace splatfit {

/// Everything that is optimized: one avatar per entity, the DPD network and
/// the PAO thresholds.
struct Model {
  std::vector<AvatarNet> avatars;
  DpdNet dpd;
  PaoParams pao;

  static Model create(const std::vector<Template>& templates, std::size_t sequence_length, const TrainConfig& config);

  /// Avatar parameters (entity by entity) followed by the DPD parameters.
  std::vector<Tensor*> main_parameters();
  std::vector<const Tensor*> main_parameters() const;
  std::vector<std::string> main_parameter_names() const;
};

struct TrainerState {
  Model model;
  AdamState main;
  AdamState thresholds;
  int epoch = 0;  // completed epochs
  Rng rng;          // batch order
  Rng dropout_rng;  // DPD dropout draws
  double best_val_psnr = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  static TrainerState create(const std::vector<Template>& templates, std::size_t sequence_length,
                             const TrainConfig& config);
};

/// One .wgt archive plus JSON manifest. Values are stored as float32, so a
/// loaded checkpoint saves back to identical bytes.
void save_checkpoint(const std::filesystem::path& path, const TrainerState& state, const TrainConfig& config);

struct LoadedCheckpoint {
  TrainerState state;
  TrainConfig config;
};

/// Throws FormatError when the archive does not match the templates.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::vector<Template>& templates);

}  // namespace splatfit
