// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "splatfit/errors.hpp"
#include "splatfit/metrics.hpp"

namespace splatfit {
namespace {

struct Prediction {
  std::vector<TextureStage> own_stages;
  std::vector<AvatarFrame> frames;
  GaussianSet g;
  std::vector<double> shadow;
  std::vector<std::size_t> offsets;  // first Gaussian of each entity
};

Prediction predict_all(const Model& m, const Dataset& d, const FrameData& f,
                       const std::vector<TextureStage>* stages = nullptr) {
  Prediction p;
  if (!stages) {
    for (const auto& a : m.avatars) p.own_stages.push_back(a.texture_stage());
    stages = &p.own_stages;
  }
  for (std::size_t e = 0; e < m.avatars.size(); ++e) {
    p.offsets.push_back(p.g.size());
    p.frames.push_back(m.avatars[e].predict(d.templates[e], (*stages)[e], f.poses[e]));
    const AvatarFrame& fr = p.frames.back();
    p.g.gaussians.insert(p.g.gaussians.end(), fr.gaussians.gaussians.begin(), fr.gaussians.gaussians.end());
    p.g.vertex_index.insert(p.g.vertex_index.end(), fr.gaussians.vertex_index.begin(), fr.gaussians.vertex_index.end());
    p.shadow.insert(p.shadow.end(), fr.shadow.values().begin(), fr.shadow.values().end());
  }
  return p;
}

// g + bias, then color scaled by xi.
GaussianSet compose(const GaussianSet& g, const std::vector<AttributeBias>& bias, const std::vector<double>& shadow) {
  GaussianSet out;
  out.vertex_index = g.vertex_index;
  out.gaussians.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.gaussians[i] = apply_bias(g.gaussians[i], bias[i]);
    out.gaussians[i].color *= shadow[i];
  }
  return out;
}

Tensor hand_mask(const TrainConfig& c, const FrameData& f, const RenderOutput& out) {
  return c.hand_mask == HandMask::target ? f.silhouette : silhouette_from_alpha(out.alpha);
}

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return t.empty() ? 0.0 : s / static_cast<double>(t.size());
}

Tensor frame_mask(const Model& m, const TrainConfig& c, const FrameData& f, const Tensor& render, const Tensor& hand,
                  double omega, WeightedMask* wm, RegionSet* regions) {
  if (!c.use_pao) return baseline_mask(f.image, render, hand, m.pao.background_threshold());
  RegionSet r = c.regions == RegionSource::ground_truth ? f.regions()
                                                        : segment_grid(f.image.dim(0), f.image.dim(1), c.grid);
  WeightedMask w = build_mask(f.image, render, r, hand, omega, m.pao);
  Tensor weights = w.weights;
  if (wm) *wm = std::move(w);
  if (regions) *regions = std::move(r);
  return weights;
}

}  // namespace

Tensor baseline_mask(const Tensor& target, const Tensor& render, const Tensor& hand, double background_threshold) {
  const Tensor r = pixel_residual(target, render);
  hand.require_shape(r.shape(), "baseline_mask hand");
  Tensor w(r.shape());
  for (std::size_t p = 0; p < w.size(); ++p) {
    w[p] = hand[p] > 0.5 ? 1.0 : std::max(0.0, background_threshold - r[p]);
  }
  return w;
}

LossReport compute_step(const Model& m, const Dataset& d, const TrainConfig& c, std::span<const int> frames,
                        Rng& rng, bool training, StepGradients* grads, const RenderOptions& ro,
                        std::span<const Tensor> fixed_masks) {
  if (frames.empty()) throw std::invalid_argument("compute_step: empty batch");
  if (!fixed_masks.empty() && fixed_masks.size() != frames.size()) {
    throw DimensionError("compute_step: one fixed mask per frame required");
  }
  const std::size_t entities = m.avatars.size();
  const double inv_b = 1.0 / static_cast<double>(frames.size());
  std::vector<TextureStage> stages;
  for (const auto& a : m.avatars) stages.push_back(a.texture_stage());

  std::vector<AvatarGrads> ag;
  std::vector<TextureStageUpstream> su;
  DpdGrads dg;
  Tensor thr({3});
  if (grads) {
    for (const auto& a : m.avatars) {
      ag.push_back(a.make_grads());
      su.push_back(a.make_stage_upstream());
    }
    dg = make_dpd_grads(m.dpd);
  }

  LossReport rep;
  for (std::size_t b = 0; b < frames.size(); ++b) {
    const int l = frames[b];
    const FrameData& f = d.frame(l);
    Prediction p;
    try {
      p = predict_all(m, d, f, &stages);
    } catch (const std::invalid_argument& e) {
      // diverged parameters surface as a non-finite refined pose
      throw NumericalAbort(l, std::string("prediction failed at frame ") + std::to_string(l) + ": " + e.what());
    }
    const std::size_t n = p.g.size();

    FrameBias fb;
    if (c.use_dpd) {
      fb = frame_bias(m.dpd, l, p.g, training, rng);
    } else {
      fb.frame = l;
      fb.bias.assign(n, AttributeBias{});
    }
    const GaussianSet rs = compose(p.g, fb.bias, p.shadow);
    const RenderOutput out = rasterize(rs, d.camera, ro);
    const Tensor hand = hand_mask(c, f, out);
    WeightedMask wm;
    RegionSet regions;
    const bool fixed = !fixed_masks.empty();
    const Tensor weights = fixed ? fixed_masks[b] : frame_mask(m, c, f, out.rgb, hand, fb.omega, &wm, &regions);
    if (fixed && weights.shape() != out.alpha.shape()) throw DimensionError("compute_step: fixed mask shape");

    Tensor d_rgb;
    const double rec = reconstruction_loss(f.image, out.rgb, weights, grads ? &d_rgb : nullptr);
    std::vector<double> opacity(n);
    for (std::size_t i = 0; i < n; ++i) opacity[i] = p.g.gaussians[i].opacity;
    RegularizerInputs ri;
    ri.bias = fb.bias;
    ri.shadow = p.shadow;
    ri.opacity = opacity;
    ri.weights = &weights;
    RegularizerGrads rg;
    const RegularizerTerms rt = regularizers(ri, c.weights, grads ? &rg : nullptr);
    if (!std::isfinite(rec + rt.total())) throw NumericalAbort(l, "non-finite loss at frame " + std::to_string(l));

    rep.reconstruction += rec * inv_b;
    rep.regularizer.bias += rt.bias * inv_b;
    rep.regularizer.shadow += rt.shadow * inv_b;
    rep.regularizer.opacity += rt.opacity * inv_b;
    rep.regularizer.mask += rt.mask * inv_b;
    rep.mean_weight += mean_of(weights) * inv_b;
    rep.frames.push_back(l);
    rep.omega.push_back(fb.omega);
    rep.masks.push_back(weights);

    if (!grads) continue;
    d_rgb *= inv_b;
    std::vector<GaussianGrad> gr = rasterize_backward(rs, d.camera, out, d_rgb, ro);
    std::vector<GaussianGrad> d_g(n), d_bias(n);
    std::vector<double> d_shadow(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 d_col = gr[i].color;
      const Vec3 unshaded = apply_bias(p.g.gaussians[i], fb.bias[i]).color;
      d_shadow[i] = unshaded.dot(d_col) + rg.shadow[i] * inv_b;
      gr[i].color = p.shadow[i] * d_col;
      const AttributeVector d_sum = apply_bias_backward(p.g.gaussians[i], fb.bias[i], gr[i]);
      d_g[i] = d_sum;
      d_bias[i] = d_sum;
      d_bias[i] += rg.bias[i] * inv_b;
      d_g[i].opacity += rg.opacity[i] * inv_b;
    }
    if (c.use_dpd && !fb.dropped) {
      const auto through_phi = frame_bias_backward(m.dpd, fb, d_bias, dg);
      for (std::size_t i = 0; i < n; ++i) d_g[i] += through_phi[i];
    }
    for (std::size_t e = 0; e < entities; ++e) {
      const std::size_t first = p.offsets[e];
      const std::size_t count = p.frames[e].gaussians.size();
      AvatarFrameUpstream up;
      up.gaussians.assign(d_g.begin() + static_cast<std::ptrdiff_t>(first),
                          d_g.begin() + static_cast<std::ptrdiff_t>(first + count));
      up.shadow = Tensor({count}, std::vector<double>(d_shadow.begin() + static_cast<std::ptrdiff_t>(first),
                                                       d_shadow.begin() + static_cast<std::ptrdiff_t>(first + count)));
      m.avatars[e].predict_backward(d.templates[e], p.frames[e], f.poses[e], up, ag[e], su[e]);
    }
    if (c.use_pao && !fixed) {
      const double pixels = static_cast<double>(weights.size());
      Tensor d_w(weights.shape());
      for (std::size_t q = 0; q < d_w.size(); ++q) {
        d_w[q] = (wm.residual[q] - c.weights.mask) / pixels * inv_b;
      }
      thr += build_mask_backward(wm, regions, hand, fb.omega, m.pao, d_w);
    }
  }

  for (std::size_t e = 0; e < entities; ++e) {
    const auto& nbrs = d.templates[e].neighbors;
    rep.regularizer.laplacian += c.weights.laplacian * laplacian_energy(stages[e].offsets, nbrs);
    if (grads) {
      Tensor g = laplacian_energy_backward(stages[e].offsets, nbrs);
      g *= c.weights.laplacian;
      su[e].offsets += g;
    }
  }
  if (entities == 2 && c.weights.cross > 0.0) {
    const auto a = texture_feature_pool(stages[0].texture);
    const auto b = texture_feature_pool(stages[1].texture);
    std::vector<double> ga, gb;
    rep.cross = c.weights.cross * cross_consistency(a, b, &ga, &gb);
    if (grads) {
      for (std::size_t e = 0; e < 2; ++e) {
        const auto& gv = e == 0 ? ga : gb;
        Tensor& t = su[e].texture;
        const double scale = c.weights.cross / static_cast<double>(t.rows());
        for (std::size_t r = 0; r < t.rows(); ++r) {
          for (std::size_t k = 0; k < t.cols(); ++k) t.at(r, k) += scale * gv[k];
        }
      }
    }
  }
  rep.total = rep.sum_of_parts();

  if (grads) {
    for (std::size_t e = 0; e < entities; ++e) m.avatars[e].texture_stage_backward(stages[e], su[e], ag[e]);
    grads->main.clear();
    for (const auto& a : ag) {
      for (const Tensor* t : a.tensors()) grads->main.push_back(*t);
    }
    for (const Tensor* t : dg.tensors()) grads->main.push_back(*t);
    grads->thresholds = thr;
  }
  return rep;
}

RenderOutput render_frame(const Model& m, const Dataset& d, const TrainConfig& c, int frame, bool with_bias,
                          const RenderOptions& ro) {
  const FrameData& f = d.frame(frame);
  const Prediction p = predict_all(m, d, f);
  std::vector<AttributeBias> bias(p.g.size());
  if (with_bias && c.use_dpd) {
    Rng unused;
    bias = frame_bias(m.dpd, frame, p.g, false, unused).bias;
  }
  return rasterize(compose(p.g, bias, p.shadow), d.camera, ro);
}

double temporal_weight(const Model& m, const TrainConfig& c, int frame) {
  if (!c.use_dpd) return 0.0;
  return m.dpd.temporal_weight(m.dpd.temporal_embed(frame));
}

Tensor frame_weights(const Model& m, const Dataset& d, const TrainConfig& c, int frame, const RenderOutput& render) {
  const FrameData& f = d.frame(frame);
  return frame_mask(m, c, f, render.rgb, hand_mask(c, f, render), temporal_weight(m, c, frame), nullptr, nullptr);
}

std::vector<FrameEvaluation> evaluate(const Model& m, const Dataset& d, const TrainConfig& c,
                                      std::span<const int> frames, const RenderOptions& ro) {
  std::vector<FrameEvaluation> rows;
  for (const int l : frames) {
    const RenderOutput out = render_frame(m, d, c, l, false, ro);
    const FrameData& f = d.frame(l);
    FrameEvaluation row;
    row.frame = l;
    row.psnr = psnr(out.rgb, f.clean);
    row.ssim = ssim(out.rgb, f.clean);
    row.omega = temporal_weight(m, c, l);
    const Tensor hand = hand_mask(c, f, out);
    const Tensor w = frame_weights(m, d, c, l, out);
    double hs = 0.0, hn = 0.0, bs = 0.0, bn = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
      if (hand[q] > 0.5) {
        hs += w[q];
        hn += 1.0;
      } else {
        bs += w[q];
        bn += 1.0;
      }
    }
    row.mean_w_hand = hn > 0.0 ? hs / hn : 0.0;
    row.mean_w_background = bn > 0.0 ? bs / bn : 0.0;
    rows.push_back(row);
  }
  return rows;
}

FrameEvaluation mean_evaluation(const std::vector<FrameEvaluation>& rows) {
  FrameEvaluation m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.mean_w_hand += r.mean_w_hand;
    m.mean_w_background += r.mean_w_background;
    m.omega += r.omega;
  }
  const double n = static_cast<double>(rows.size());
  m.psnr /= n;
  m.ssim /= n;
  m.mean_w_hand /= n;
  m.mean_w_background /= n;
  m.omega /= n;
  return m;
}

void write_metrics_csv(std::ostream& out, const std::vector<FrameEvaluation>& rows) {
  out << "frame_index,psnr,ssim,mean_W_hand,mean_W_background,omega\n";
  out << std::setprecision(10);
  auto line = [&](const std::string& label, const FrameEvaluation& r) {
    out << label << ',' << r.psnr << ',' << r.ssim << ',' << r.mean_w_hand << ',' << r.mean_w_background << ','
        << r.omega << '\n';
  };
  for (const auto& r : rows) line(std::to_string(r.frame), r);
  line("mean", mean_evaluation(rows));
}

SplitFrames split_frames(const Dataset& d, const TrainConfig& c) {
  SplitFrames s;
  s.test = d.test;
  const auto count = static_cast<std::size_t>(std::lround(d.config.frames * c.val_fraction));
  const auto& pool = d.train;
  if (count >= pool.size()) throw std::invalid_argument("split: validation would leave no training frames");
  for (std::size_t i = 0; i < count; ++i) s.val.push_back(pool[(2 * i + 1) * pool.size() / (2 * count)]);
  for (int l : pool) {
    if (std::find(s.val.begin(), s.val.end(), l) == s.val.end()) s.train.push_back(l);
  }
  return s;
}

Trainer::Trainer(const Dataset& data, TrainConfig config)
    : Trainer(data, config, TrainerState::create(data.templates, data.frame_count(), config)) {}

Trainer::Trainer(const Dataset& data, TrainConfig config, TrainerState state)
    : data_(data), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  split_ = split_frames(data_, config_);
}

RenderOptions Trainer::render_options() const {
  RenderOptions ro;
  ro.sequential = config_.sequential;
  return ro;
}

LossReport Trainer::step(std::span<const int> frames) {
  StepGradients g;
  const LossReport rep = compute_step(state_.model, data_, config_, frames, state_.dropout_rng, true, &g, render_options());
  std::vector<Tensor*> params = state_.model.main_parameters();
  std::vector<const Tensor*> grads;
  for (const auto& t : g.main) grads.push_back(&t);
  try {
    state_.main.step(params, grads);
    Tensor* tp[] = {&state_.model.pao.thresholds};
    const Tensor* tg[] = {&g.thresholds};
    if (config_.use_pao) state_.thresholds.step(tp, tg);
  } catch (const OptimizerError& e) {
    throw NumericalAbort(frames.front(), e.what());
  }
  weight_sum_ += rep.mean_weight * static_cast<double>(frames.size());
  weight_count_ += frames.size();
  return rep;
}

EpochLog Trainer::run_epoch() {
  EpochLog log;
  log.epoch = state_.epoch;
  log.lr_main = config_.learning_rate(config_.lr_main, state_.epoch);
  log.lr_thresholds = config_.learning_rate(config_.lr_thresholds, state_.epoch);
  state_.main.set_learning_rate(log.lr_main);
  state_.thresholds.set_learning_rate(log.lr_thresholds);

  std::vector<int> order = split_.train;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[state_.rng.index(i)]);
  std::size_t steps = 0;
  for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config_.batch)) {
    const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config_.batch));
    const std::span<const int> batch(order.data() + b, end - b);
    const LossReport r = step(batch);
    log.loss.total += r.total;
    log.loss.reconstruction += r.reconstruction;
    log.loss.regularizer.bias += r.regularizer.bias;
    log.loss.regularizer.shadow += r.regularizer.shadow;
    log.loss.regularizer.opacity += r.regularizer.opacity;
    log.loss.regularizer.laplacian += r.regularizer.laplacian;
    log.loss.regularizer.mask += r.regularizer.mask;
    log.loss.cross += r.cross;
    log.loss.mean_weight += r.mean_weight;
    log.frames.insert(log.frames.end(), r.frames.begin(), r.frames.end());
    log.omega.insert(log.omega.end(), r.omega.begin(), r.omega.end());
    ++steps;
  }
  if (steps) {
    const double inv = 1.0 / static_cast<double>(steps);
    log.loss.total *= inv;
    log.loss.reconstruction *= inv;
    log.loss.regularizer.bias *= inv;
    log.loss.regularizer.shadow *= inv;
    log.loss.regularizer.opacity *= inv;
    log.loss.regularizer.laplacian *= inv;
    log.loss.regularizer.mask *= inv;
    log.loss.cross *= inv;
    log.loss.mean_weight *= inv;
  }
  ++state_.epoch;
  log.val_psnr = validation_psnr();
  return log;
}

double Trainer::validation_psnr() const {
  const auto& frames = split_.val.empty() ? split_.train : split_.val;
  double s = 0.0;
  for (int l : frames) s += psnr(render_frame(state_.model, data_, config_, l, false, render_options()).rgb, data_.frame(l).clean);
  return s / static_cast<double>(frames.size());
}

FitResult Trainer::fit(const std::filesystem::path& out_dir, std::ostream* log) {
  std::filesystem::create_directories(out_dir);
  FitResult result;
  result.checkpoint = out_dir / "checkpoint.wgt";
  TrainerState best = state_;
  bool saved = false;
  while (state_.epoch < config_.epochs) {
    const TrainerState before = state_;
    EpochLog e;
    try {
      e = run_epoch();
    } catch (const NumericalAbort&) {
      save_checkpoint(out_dir / "last_good.wgt", before, config_);
      if (saved) save_checkpoint(result.checkpoint, best, config_);
      throw;
    }
    if (e.val_psnr > state_.best_val_psnr) {
      state_.best_val_psnr = e.val_psnr;
      state_.best_epoch = e.epoch;
      best = state_;
      saved = true;
    }
    if (log) {
      nlohmann::json j;
      j["epoch"] = e.epoch;
      j["lr_main"] = e.lr_main;
      j["lr_thresholds"] = e.lr_thresholds;
      j["loss"] = e.loss.total;
      j["reconstruction"] = e.loss.reconstruction;
      j["bias"] = e.loss.regularizer.bias;
      j["shadow"] = e.loss.regularizer.shadow;
      j["opacity"] = e.loss.regularizer.opacity;
      j["laplacian"] = e.loss.regularizer.laplacian;
      j["mask"] = e.loss.regularizer.mask;
      j["cross"] = e.loss.cross;
      j["mean_weight"] = e.loss.mean_weight;
      j["val_psnr"] = e.val_psnr;
      j["thresholds"] = {state_.model.pao.thresholds[0], state_.model.pao.thresholds[1], state_.model.pao.thresholds[2]};
      *log << j.dump() << "\n" << std::flush;
    }
    result.epochs.push_back(std::move(e));
  }
  if (!saved) best = state_;
  best.best_val_psnr = state_.best_val_psnr;
  best.best_epoch = state_.best_epoch;
  save_checkpoint(result.checkpoint, best, config_);
  result.best_val_psnr = state_.best_val_psnr;
  result.best_epoch = state_.best_epoch;
  result.mean_weight = weight_count_ ? weight_sum_ / static_cast<double>(weight_count_) : 0.0;
  return result;
}

std::vector<AblationRow> ablate(const Dataset& data, const TrainConfig& config, const std::filesystem::path& out_dir) {
  struct Variant {
    const char* name;
    bool dpd;
    bool pao;
  };
  const Variant variants[] = {{"baseline", false, false}, {"dpd", true, false}, {"dpd+pao", true, true}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainConfig c = config;
    c.use_dpd = v.dpd;
    c.use_pao = v.pao;
    Trainer t(data, c);
    const FitResult fr = t.fit(out_dir / v.name);
    const LoadedCheckpoint best = load_checkpoint(fr.checkpoint, data.templates);
    RenderOptions ro;
    ro.sequential = c.sequential;
    const auto m = mean_evaluation(evaluate(best.state.model, data, c, data.test, ro));
    rows.push_back({v.name, m.psnr, m.ssim, fr.best_val_psnr});
  }
  return rows;
}

}  // namespace splatfit
