// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "splatfit/errors.hpp"

namespace splatfit {
namespace {

template <class T>
void read(const nlohmann::json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw FormatError(std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (!(lr_main >= 0.0) || !(lr_thresholds >= 0.0)) throw std::invalid_argument("train: learning rates must be >= 0");
  if (!(decay > 0.0) || decay_every < 1) throw std::invalid_argument("train: bad decay schedule");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("train: split fractions must sum to 1");
  }
  if (train_fraction <= 0.0 || val_fraction < 0.0 || test_fraction < 0.0) throw std::invalid_argument("train: bad split");
  if (grid < 1) throw std::invalid_argument("train: grid must be >= 1");
}

double TrainConfig::learning_rate(double lr0, int epoch) const {
  return lr0 * std::pow(decay, static_cast<double>(epoch / decay_every));
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr_main"] = c.lr_main;
  j["lr_thresholds"] = c.lr_thresholds;
  j["decay"] = c.decay;
  j["decay_every"] = c.decay_every;
  j["train_fraction"] = c.train_fraction;
  j["val_fraction"] = c.val_fraction;
  j["test_fraction"] = c.test_fraction;
  j["seed"] = c.seed;
  j["sequential"] = c.sequential;
  j["use_dpd"] = c.use_dpd;
  j["use_pao"] = c.use_pao;
  j["regions"] = region_source_name(c.regions);
  j["hand_mask"] = hand_mask_name(c.hand_mask);
  j["grid"] = c.grid;
  j["pao_alpha"] = c.pao_alpha;
  j["pao_beta"] = c.pao_beta;
  j["weights"] = {{"bias", c.weights.bias},         {"shadow", c.weights.shadow}, {"opacity", c.weights.opacity},
                  {"laplacian", c.weights.laplacian}, {"mask", c.weights.mask},     {"cross", c.weights.cross}};
  j["avatar"] = {{"latent_width", c.avatar.latent_width},       {"feature_width", c.avatar.feature_width},
                 {"texture_hidden", c.avatar.texture_hidden},   {"head_hidden", c.avatar.head_hidden},
                 {"encoding_levels", c.avatar.encoding_levels}, {"encoding_period", c.avatar.encoding_period},
                 {"offset_gain", c.avatar.offset_gain},         {"pose_gain", c.avatar.pose_gain},
                 {"seed", c.avatar.seed}};
  j["dpd"] = {{"embedding_width", c.dpd.embedding_width}, {"encoding_levels", c.dpd.encoding_levels},
              {"bias_hidden", c.dpd.bias_hidden},         {"bias_gain", c.dpd.bias_gain},
              {"dropout", c.dpd.dropout},                 {"weight_init", c.dpd.weight_init},
              {"seed", c.dpd.seed}};
  return j;
}

const char* hand_mask_name(HandMask m) { return m == HandMask::target ? "target" : "render"; }

HandMask hand_mask_from_name(const std::string& name) {
  if (name == "render") return HandMask::render;
  if (name == "target") return HandMask::target;
  throw std::invalid_argument("unknown hand mask '" + name + "'");
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    reject_unknown(j,
                   {"epochs", "batch", "lr_main", "lr_thresholds", "decay", "decay_every", "train_fraction",
                    "val_fraction", "test_fraction", "seed", "sequential", "use_dpd", "use_pao", "regions", "hand_mask", "grid",
                    "pao_alpha", "pao_beta", "weights", "avatar", "dpd"},
                   "train");
    read(j, "epochs", c.epochs);
    read(j, "batch", c.batch);
    read(j, "lr_main", c.lr_main);
    read(j, "lr_thresholds", c.lr_thresholds);
    read(j, "decay", c.decay);
    read(j, "decay_every", c.decay_every);
    read(j, "train_fraction", c.train_fraction);
    read(j, "val_fraction", c.val_fraction);
    read(j, "test_fraction", c.test_fraction);
    read(j, "seed", c.seed);
    read(j, "sequential", c.sequential);
    read(j, "use_dpd", c.use_dpd);
    read(j, "use_pao", c.use_pao);
    if (j.contains("regions")) c.regions = region_source_from_name(j.at("regions").get<std::string>());
    if (j.contains("hand_mask")) c.hand_mask = hand_mask_from_name(j.at("hand_mask").get<std::string>());
    read(j, "grid", c.grid);
    read(j, "pao_alpha", c.pao_alpha);
    read(j, "pao_beta", c.pao_beta);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      reject_unknown(w, {"bias", "shadow", "opacity", "laplacian", "mask", "cross"}, "train.weights");
      read(w, "bias", c.weights.bias);
      read(w, "shadow", c.weights.shadow);
      read(w, "opacity", c.weights.opacity);
      read(w, "laplacian", c.weights.laplacian);
      read(w, "mask", c.weights.mask);
      read(w, "cross", c.weights.cross);
    }
    if (j.contains("avatar")) {
      const auto& a = j.at("avatar");
      reject_unknown(a,
                     {"latent_width", "feature_width", "texture_hidden", "head_hidden", "encoding_levels",
                      "encoding_period", "offset_gain", "pose_gain", "seed"},
                     "train.avatar");
      read(a, "latent_width", c.avatar.latent_width);
      read(a, "feature_width", c.avatar.feature_width);
      read(a, "texture_hidden", c.avatar.texture_hidden);
      read(a, "head_hidden", c.avatar.head_hidden);
      read(a, "encoding_levels", c.avatar.encoding_levels);
      read(a, "encoding_period", c.avatar.encoding_period);
      read(a, "offset_gain", c.avatar.offset_gain);
      read(a, "pose_gain", c.avatar.pose_gain);
      read(a, "seed", c.avatar.seed);
    }
    if (j.contains("dpd")) {
      const auto& d = j.at("dpd");
      reject_unknown(d, {"embedding_width", "encoding_levels", "bias_hidden", "bias_gain", "dropout", "weight_init", "seed"},
                     "train.dpd");
      read(d, "embedding_width", c.dpd.embedding_width);
      read(d, "encoding_levels", c.dpd.encoding_levels);
      read(d, "bias_hidden", c.dpd.bias_hidden);
      read(d, "bias_gain", c.dpd.bias_gain);
      read(d, "dropout", c.dpd.dropout);
      read(d, "weight_init", c.dpd.weight_init);
      read(d, "seed", c.dpd.seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  reject_unknown(j, {"train", "scene"}, "config");
  RunConfig rc;
  if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
  try {
    if (j.contains("scene")) rc.scene = scene_config_from_json(j.at("scene"));
  } catch (const std::exception& e) {
    throw FormatError(std::string("scene config: ") + e.what());
  }
  return rc;
}

}  // namespace splatfit
