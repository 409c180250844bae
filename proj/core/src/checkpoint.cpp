// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/checkpoint.hpp"

#include <cmath>
#include <utility>

#include "splatfit/errors.hpp"
#include "splatfit/wgt_io.hpp"

namespace splatfit {

Model Model::create(const std::vector<Template>& templates, std::size_t sequence_length, const TrainConfig& config) {
  if (templates.empty()) throw std::invalid_argument("model: at least one template required");
  Model m;
  for (std::size_t e = 0; e < templates.size(); ++e) {
    AvatarConfig ac = config.avatar;
    ac.seed += e;
    m.avatars.emplace_back(templates[e], ac);
  }
  m.dpd = DpdNet(sequence_length, config.dpd);
  m.pao = PaoParams::defaults(templates.size());
  m.pao.alpha = config.pao_alpha;
  m.pao.beta = config.pao_beta;
  return m;
}

std::vector<Tensor*> Model::main_parameters() {
  std::vector<Tensor*> out;
  for (auto& a : avatars) {
    for (Tensor* t : a.parameters()) out.push_back(t);
  }
  for (Tensor* t : dpd.parameters()) out.push_back(t);
  return out;
}

std::vector<const Tensor*> Model::main_parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& a : avatars) {
    for (const Tensor* t : a.parameters()) out.push_back(t);
  }
  for (const Tensor* t : dpd.parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> Model::main_parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t e = 0; e < avatars.size(); ++e) {
    for (const auto& n : avatars[e].parameter_names()) out.push_back("entity" + std::to_string(e) + "." + n);
  }
  for (auto& n : dpd.parameter_names()) out.push_back(std::move(n));
  return out;
}

TrainerState TrainerState::create(const std::vector<Template>& templates, std::size_t sequence_length,
                                  const TrainConfig& config) {
  TrainerState s;
  s.model = Model::create(templates, sequence_length, config);
  s.main = AdamState(s.model.main_parameter_names(), std::as_const(s.model).main_parameters(), AdamConfig{config.lr_main});
  s.thresholds = AdamState({"pao.thresholds"}, {&s.model.pao.thresholds}, AdamConfig{config.lr_thresholds});
  s.rng = Rng(config.seed);
  s.dropout_rng = Rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const TrainerState& s, const TrainConfig& config) {
  std::vector<NamedTensor> tensors;
  const auto names = s.model.main_parameter_names();
  const auto params = s.model.main_parameters();
  for (std::size_t i = 0; i < names.size(); ++i) tensors.push_back({names[i], *params[i]});
  for (std::size_t i = 0; i < names.size(); ++i) {
    tensors.push_back({"adam.main.m." + names[i], s.main.first_moments()[i]});
    tensors.push_back({"adam.main.v." + names[i], s.main.second_moments()[i]});
  }
  tensors.push_back({"pao.thresholds", s.model.pao.thresholds});
  tensors.push_back({"adam.thresholds.m", s.thresholds.first_moments()[0]});
  tensors.push_back({"adam.thresholds.v", s.thresholds.second_moments()[0]});

  nlohmann::json meta;
  meta["kind"] = "splatfit-checkpoint";
  meta["config"] = train_config_to_json(config);
  meta["entities"] = s.model.avatars.size();
  meta["sequence_length"] = s.model.dpd.sequence_length();
  meta["epoch"] = s.epoch;
  meta["main_steps"] = s.main.step_count();
  meta["threshold_steps"] = s.thresholds.step_count();
  meta["rng"] = s.rng.serialize();
  meta["dropout_rng"] = s.dropout_rng.serialize();
  meta["best_val_psnr"] = std::isfinite(s.best_val_psnr) ? nlohmann::json(s.best_val_psnr) : nlohmann::json();
  meta["best_epoch"] = s.best_epoch;
  meta["pao_alpha"] = s.model.pao.alpha;
  meta["pao_beta"] = s.model.pao.beta;
  save_archive(path, tensors, meta);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::vector<Template>& templates) {
  const Archive ar = load_archive(path);
  if (ar.meta.value("kind", "") != "splatfit-checkpoint") throw FormatError(path.string() + " is not a checkpoint");
  LoadedCheckpoint lc;
  try {
    lc.config = train_config_from_json(ar.meta.at("config"));
    if (ar.meta.at("entities").get<std::size_t>() != templates.size()) {
      throw FormatError("checkpoint entity count does not match the dataset");
    }
    TrainerState& s = lc.state;
    s = TrainerState::create(templates, ar.meta.at("sequence_length").get<std::size_t>(), lc.config);
    const auto names = s.model.main_parameter_names();
    const auto params = s.model.main_parameters();
    for (std::size_t i = 0; i < names.size(); ++i) {
      const Tensor& t = ar.get(names[i]);
      t.require_shape(params[i]->shape(), names[i].c_str());
      *params[i] = t;
      s.main.first_moments()[i] = ar.get("adam.main.m." + names[i]);
      s.main.second_moments()[i] = ar.get("adam.main.v." + names[i]);
    }
    s.model.pao.thresholds = ar.get("pao.thresholds");
    s.model.pao.thresholds.require_shape({3}, "pao.thresholds");
    s.thresholds.first_moments()[0] = ar.get("adam.thresholds.m");
    s.thresholds.second_moments()[0] = ar.get("adam.thresholds.v");
    s.model.pao.alpha = ar.meta.at("pao_alpha").get<double>();
    s.model.pao.beta = ar.meta.at("pao_beta").get<double>();
    s.epoch = ar.meta.at("epoch").get<int>();
    s.main.set_step_count(ar.meta.at("main_steps").get<std::int64_t>());
    s.thresholds.set_step_count(ar.meta.at("threshold_steps").get<std::int64_t>());
    s.rng.deserialize(ar.meta.at("rng").get<std::string>());
    s.dropout_rng.deserialize(ar.meta.at("dropout_rng").get<std::string>());
    const auto& best = ar.meta.at("best_val_psnr");
    s.best_val_psnr = best.is_null() ? -std::numeric_limits<double>::infinity() : best.get<double>();
    s.best_epoch = ar.meta.at("best_epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return lc;
}

}  // namespace splatfit
