// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "splatfit/errors.hpp"
#include "splatfit/image_io.hpp"
#include "splatfit/wgt_io.hpp"

namespace splatfit {
namespace {

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

std::string stem(int l) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", l);
  return buf;
}

}  // namespace

double FrameData::strength() const {
  double s = 0.0;
  for (const auto& [type, value] : perturbations) s = std::max(s, value);
  return s;
}

RegionSet FrameData::regions() const {
  RegionSet set;
  set.source = RegionSource::ground_truth;
  set.add("entity", entity);
  set.add("occluder", occluder);
  set.add("background", background);
  return set;
}

const FrameData& Dataset::frame(int l) const {
  if (l < 1 || static_cast<std::size_t>(l) > frames.size()) {
    throw std::invalid_argument("frame " + std::to_string(l) + " outside the sequence");
  }
  return frames[static_cast<std::size_t>(l - 1)];
}

Dataset load_dataset(const std::filesystem::path& root) {
  Dataset d;
  d.root = root;
  const auto manifest = read_json(root / "manifest.json");
  if (manifest.value("format", "") != "splatfit-scene") throw FormatError(root.string() + " is not a scene directory");
  try {
    d.config = scene_config_from_json(manifest.at("config"));
    d.camera = camera_from_json(read_json(root / "camera.json"));
    for (const auto& name : manifest.at("templates")) d.templates.push_back(load_template(root / name.get<std::string>()));
    d.train = manifest.at("split").at("train").get<std::vector<int>>();
    d.test = manifest.at("split").at("test").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  const Tensor poses = load_wgt(root / "poses.wgt");
  const std::size_t frames = static_cast<std::size_t>(d.config.frames);
  const std::size_t width = PoseState::flat_width(d.templates.front().joint_count());
  if (poses.rank() != 2 || poses.dim(0) != frames || poses.dim(1) != width * d.templates.size()) {
    throw FormatError("poses.wgt has shape " + shape_string(poses.shape()));
  }
  for (int l = 1; l <= d.config.frames; ++l) {
    FrameData f;
    f.index = l;
    const std::string s = stem(l);
    f.image = load_wgt(root / "frames" / (s + ".wgt"));
    f.clean = load_wgt(root / "clean" / (s + ".wgt"));
    f.entity = load_png(root / "masks" / (s + "_entity.png"));
    f.occluder = load_png(root / "masks" / (s + "_occluder.png"));
    f.background = load_png(root / "masks" / (s + "_background.png"));
    f.silhouette = load_png(root / "masks" / (s + "_silhouette.png"));
    for (std::size_t e = 0; e < d.templates.size(); ++e) {
      const std::span<const double> row(poses.data() + (static_cast<std::size_t>(l) - 1) * poses.cols() + e * width, width);
      f.poses.push_back(PoseState::unflatten(row, d.templates[e].joint_count()));
    }
    for (const auto& p : d.config.schedule) {
      if (p.covers(l)) f.perturbations.emplace_back(p.type, p.strength);
    }
    d.frames.push_back(std::move(f));
  }
  return d;
}

}  // namespace splatfit
