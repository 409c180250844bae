// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "splatfit/checkpoint.hpp"
#include "splatfit/config.hpp"
#include "splatfit/dataset.hpp"
#include "splatfit/objective.hpp"
#include "splatfit/rasterizer.hpp"

namespace splatfit {

/// Gradients laid out like Model::main_parameters, plus the thresholds.
struct StepGradients {
  std::vector<Tensor> main;
  Tensor thresholds;
};

/// The full objective over a batch: mean over frames of the weighted
/// reconstruction and point-wise regularizers, plus the per-step Laplacian
/// and cross-entity terms. DPD dropout draws come from `rng` in frame order
/// when `training` is set. Throws NumericalAbort on a non-finite frame loss.
/// Non-empty `fixed_masks` replace the per-frame W (batch order); threshold
/// gradients are then zero.
LossReport compute_step(const Model& model, const Dataset& data, const TrainConfig& config,
                        std::span<const int> frames, Rng& rng, bool training, StepGradients* grads,
                        const RenderOptions& options = {}, std::span<const Tensor> fixed_masks = {});

/// Baseline supervision: 1 on the rendered silhouette, relu(T_b - residual)
/// elsewhere.
Tensor baseline_mask(const Tensor& target, const Tensor& render, const Tensor& hand, double background_threshold);

/// Bias-free render (DPD is not evaluated) or, with `with_bias` and DPD
/// enabled, the training-path render with the inference-mode temporal weight.
RenderOutput render_frame(const Model& model, const Dataset& data, const TrainConfig& config, int frame, bool with_bias,
                          const RenderOptions& options = {});

/// Inference-mode omega_l (no dropout); 0 when DPD is disabled.
double temporal_weight(const Model& model, const TrainConfig& config, int frame);

/// The mask the objective would use for `frame` given a render.
Tensor frame_weights(const Model& model, const Dataset& data, const TrainConfig& config, int frame,
                     const RenderOutput& render);

struct FrameEvaluation {
  int frame = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mean_w_hand = 0.0;
  double mean_w_background = 0.0;
  double omega = 0.0;
};

/// Bias-free renders of `frames` against the clean references.
std::vector<FrameEvaluation> evaluate(const Model& model, const Dataset& data, const TrainConfig& config,
                                      std::span<const int> frames, const RenderOptions& options = {});
FrameEvaluation mean_evaluation(const std::vector<FrameEvaluation>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<FrameEvaluation>& rows);

struct SplitFrames {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Test frames come from the dataset; round(L * val_fraction) validation
/// frames are spread evenly over the rest.
SplitFrames split_frames(const Dataset& data, const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double lr_main = 0.0;
  double lr_thresholds = 0.0;
  LossReport loss;  // step means
  double val_psnr = 0.0;
  std::vector<int> frames;
  std::vector<double> omega;
};

struct FitResult {
  std::vector<EpochLog> epochs;
  double best_val_psnr = 0.0;
  int best_epoch = -1;
  double mean_weight = 0.0;  // mean(W) over every frame of every step
  std::filesystem::path checkpoint;
};

class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig config);
  Trainer(const Dataset& data, TrainConfig config, TrainerState state);

  const SplitFrames& split() const { return split_; }
  TrainerState& state() { return state_; }
  const TrainerState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }

  /// One optimizer step on `frames`.
  LossReport step(std::span<const int> frames);
  /// One pass over the shuffled training frames.
  EpochLog run_epoch();
  double validation_psnr() const;

  /// Runs the remaining epochs. The best-validation state is written to
  /// out_dir/checkpoint.wgt, one JSON line per epoch to `log`. On a
  /// numerical abort the last good state goes to out_dir/last_good.wgt
  /// before NumericalAbort propagates.
  FitResult fit(const std::filesystem::path& out_dir, std::ostream* log = nullptr);

 private:
  RenderOptions render_options() const;

  const Dataset& data_;
  TrainConfig config_;
  TrainerState state_;
  SplitFrames split_;
  double weight_sum_ = 0.0;
  std::size_t weight_count_ = 0;
};

struct AblationRow {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double best_val_psnr = 0.0;
};

/// Baseline, +DPD and +DPD+PAO fits with identical seeds; each run writes
/// into out_dir/<name>.
std::vector<AblationRow> ablate(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace splatfit
