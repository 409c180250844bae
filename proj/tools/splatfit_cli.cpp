// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splatfit/checkpoint.hpp"
#include "splatfit/config.hpp"
#include "splatfit/dataset.hpp"
#include "splatfit/errors.hpp"
#include "splatfit/gradient_suite.hpp"
#include "splatfit/image_io.hpp"
#include "splatfit/scene_synth.hpp"
#include "splatfit/trainer.hpp"
#include "splatfit/wgt_io.hpp"

namespace fs = std::filesystem;
using namespace splatfit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitAbort = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool sequential = false;
  bool with_bias = false;
  std::string dump_masks;
  std::string data;
  std::string out;
  std::string checkpoint;
  int frame = 1;
  std::string split = "test";
  std::optional<int> epochs;
  int instances = 10;
};

RunConfig run_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) {
    rc.scene.seed = *o.seed;
    rc.train.seed = *o.seed;
  }
  if (o.sequential) rc.train.sequential = true;
  if (o.epochs) rc.train.epochs = *o.epochs;
  rc.train.validate();
  return rc;
}

RenderOptions render_options(bool sequential) {
  RenderOptions ro;
  ro.sequential = sequential;
  return ro;
}

std::string frame_stem(int l) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", l);
  return buf;
}

int cmd_synth(const Options& o) {
  const RunConfig rc = run_config(o);
  synthesize(rc.scene, o.out);
  std::cout << "wrote " << rc.scene.frames << " frames to " << o.out << "\n";
  return kExitOk;
}

int cmd_fit(const Options& o) {
  const RunConfig rc = run_config(o);
  const Dataset data = load_dataset(o.data);
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "train_log.ndjson");
  Trainer trainer(data, rc.train);
  try {
    const FitResult r = trainer.fit(o.out, &log);
    std::cout << "best val psnr " << r.best_val_psnr << " at epoch " << r.best_epoch << "\n"
              << "checkpoint " << r.checkpoint.string() << "\n";
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort at frame " << e.frame_index() << ": " << e.what() << "\n"
              << "last good state in " << (fs::path(o.out) / "last_good.wgt").string() << "\n";
    return kExitAbort;
  }
  return kExitOk;
}

int cmd_render(const Options& o) {
  const Dataset data = load_dataset(o.data);
  const LoadedCheckpoint ck = load_checkpoint(o.checkpoint, data.templates);
  const RenderOutput out = render_frame(ck.state.model, data, ck.config, o.frame, o.with_bias, render_options(o.sequential));
  save_png(o.out, out.rgb);
  return kExitOk;
}

std::vector<int> split_of(const Dataset& data, const TrainConfig& c, const std::string& name) {
  if (name == "test") return data.test;
  const SplitFrames s = split_frames(data, c);
  if (name == "val") return s.val;
  if (name == "train") return s.train;
  std::vector<int> all;
  for (std::size_t l = 1; l <= data.frame_count(); ++l) all.push_back(static_cast<int>(l));
  return all;
}

int cmd_eval(const Options& o) {
  const Dataset data = load_dataset(o.data);
  const LoadedCheckpoint ck = load_checkpoint(o.checkpoint, data.templates);
  const std::vector<int> frames = split_of(data, ck.config, o.split);
  const RenderOptions ro = render_options(o.sequential);
  const auto rows = evaluate(ck.state.model, data, ck.config, frames, ro);
  if (o.out.empty()) {
    write_metrics_csv(std::cout, rows);
  } else {
    std::ofstream csv(o.out);
    write_metrics_csv(csv, rows);
    const FrameEvaluation m = mean_evaluation(rows);
    std::cout << "mean psnr " << m.psnr << " ssim " << m.ssim << "\n";
  }
  if (!o.dump_masks.empty()) {
    fs::create_directories(o.dump_masks);
    for (const int l : frames) {
      const RenderOutput out = render_frame(ck.state.model, data, ck.config, l, true, ro);
      const Tensor w = frame_weights(ck.state.model, data, ck.config, l, out);
      const fs::path stem = fs::path(o.dump_masks) / (frame_stem(l) + "_W");
      save_wgt(stem.string() + ".wgt", w);
      save_png(stem.string() + ".png", false_color(w));
    }
  }
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig rc = run_config(o);
  const Dataset data = load_dataset(o.data);
  const auto rows = ablate(data, rc.train, o.out);
  std::ofstream table(fs::path(o.out) / "ablation.csv");
  for (std::ostream* s : {static_cast<std::ostream*>(&std::cout), static_cast<std::ostream*>(&table)}) {
    *s << "variant,psnr,ssim,best_val_psnr\n";
    for (const auto& r : rows) *s << r.name << ',' << r.psnr << ',' << r.ssim << ',' << r.best_val_psnr << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const Options& o) {
  bool ok = true;
  for (const PathCheck& c : run_gradient_suite(o.seed.value_or(1), o.instances)) {
    std::cout << (c.passed() ? "ok   " : "FAIL ") << c.path << " instances=" << c.instances
              << " max_rel_err=" << c.worst.max_relative_error << " tol=" << c.tolerance << " checked=" << c.checked << " kinks=" << c.skipped << "\n";
    ok = ok && c.passed();
  }
  return ok ? kExitOk : kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatfit: robust avatar fitting with Gaussian splats"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Override the scene and training seed"); };
  auto add_sequential = [&](CLI::App* c) { c->add_flag("--sequential", o.sequential, "Fully serial execution"); };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Dataset directory")->required();
  add_seed(synth);

  CLI::App* fit = app.add_subcommand("fit", "Fit a scene");
  fit->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  fit->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  fit->add_option("--out", o.out, "Output directory")->required();
  fit->add_option("--epochs", o.epochs, "Override the epoch count");
  add_seed(fit);
  add_sequential(fit);

  CLI::App* render = app.add_subcommand("render", "Render one frame from a checkpoint");
  render->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  render->add_option("--checkpoint", o.checkpoint, "Checkpoint .wgt")->required()->check(CLI::ExistingFile);
  render->add_option("--frame", o.frame, "Frame index, 1-based")->required();
  render->add_option("--out", o.out, "Output PNG")->required();
  render->add_flag("--with-bias", o.with_bias, "Apply the per-frame bias");
  add_sequential(render);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint .wgt")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", o.split, "Frames to evaluate")->check(CLI::IsMember({"test", "val", "train", "all"}));
  eval->add_option("--out", o.out, "Metrics CSV (stdout when omitted)");
  eval->add_option("--dump-masks", o.dump_masks, "Write per-frame weight masks here");
  add_sequential(eval);

  CLI::App* abl = app.add_subcommand("ablate", "Baseline, +DPD and +DPD+PAO fits");
  abl->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  abl->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  abl->add_option("--out", o.out, "Output directory")->required();
  abl->add_option("--epochs", o.epochs, "Override the epoch count");
  add_seed(abl);
  add_sequential(abl);

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference checks of every gradient path");
  grad->add_option("--instances", o.instances, "Instances per path")->check(CLI::PositiveNumber);
  add_seed(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*fit) return cmd_fit(o);
    if (*render) return cmd_render(o);
    if (*eval) return cmd_eval(o);
    if (*abl) return cmd_ablate(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort at frame " << e.frame_index() << ": " << e.what() << "\n";
    return kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
