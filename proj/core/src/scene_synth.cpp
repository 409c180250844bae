// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "splatfit/image_io.hpp"
#include "splatfit/parallel.hpp"
#include "splatfit/random.hpp"
#include "splatfit/rasterizer.hpp"
#include "splatfit/wgt_io.hpp"

namespace splatfit {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double amplitude = 0.0;
  double cycles = 1.0;
  double phase = 0.0;

  double at(double t) const { return amplitude * std::sin(kTwoPi * cycles * t + phase); }
  double flex(double t) const { return amplitude * (0.5 - 0.5 * std::cos(kTwoPi * cycles * t + phase)); }
};

struct Trajectory {
  std::array<Wave, 3> root;
  std::array<Wave, 3> shift;
  std::vector<Wave> fingers;
  std::vector<Vec3> axes;
  std::array<double, kShapeCoefficients> shape{};
  Vec3 offset = Vec3::Zero();

  PoseState at(int frame, int frames, double finger_scale) const {
    const double t = static_cast<double>(frame - 1) / static_cast<double>(frames);
    PoseState h = PoseState::zero(fingers.size() + 1);
    for (int k = 0; k < 3; ++k) {
      h.joint_rotations[0][k] = root[static_cast<std::size_t>(k)].at(t);
      h.translation[k] = offset[k] + shift[static_cast<std::size_t>(k)].at(t);
    }
    for (std::size_t f = 0; f < fingers.size(); ++f) {
      h.joint_rotations[f + 1] = axes[f] * (finger_scale * fingers[f].flex(t));
    }
    h.shape = shape;
    return h;
  }
};

Trajectory make_trajectory(const Template& tmpl, Rng& rng, double articulation, const Vec3& offset) {
  Trajectory tr;
  for (auto& w : tr.root) w = {rng.uniform(0.1, 0.25), 1.0, rng.uniform(0.0, kTwoPi)};
  for (auto& w : tr.shift) w = {rng.uniform(0.03, 0.08), 1.0, rng.uniform(0.0, kTwoPi)};
  for (std::size_t k = 1; k < tmpl.joint_count(); ++k) {
    const Vec3 dir = tmpl.joints[k].rest_position.normalized();
    tr.axes.push_back(Vec3::UnitZ().cross(dir).normalized());
    tr.fingers.push_back({articulation * rng.uniform(0.6, 1.0), rng.uniform() < 0.5 ? 1.0 : 2.0,
                          rng.uniform(0.0, kTwoPi)});
  }
  for (double& b : tr.shape) b = 0.5 * rng.normal();
  tr.offset = offset;
  return tr;
}

PoseState storage_rounded_pose(const PoseState& h) {
  auto flat = h.flatten();
  for (double& v : flat) v = static_cast<double>(static_cast<float>(v));
  return PoseState::unflatten(flat, h.joint_rotations.size());
}

Vec3 texture_color(const Vec3& rest) {
  const Vec3 base(0.86, 0.64, 0.52);
  double shade = 1.0 + 0.12 * std::sin(8.0 * rest.x()) * std::cos(6.0 * rest.y());
  if (std::abs(std::sin(10.0 * rest.y() + 4.0 * rest.x())) < 0.15) shade *= 0.8;
  Vec3 c = base * shade;
  if (rest.z() < -0.05) c = 0.5 * c + 0.5 * Vec3(0.93, 0.78, 0.72);
  for (int k = 0; k < 3; ++k) c[k] = std::clamp(c[k], 0.0, 1.0);
  return c;
}

Vec2 project_point(const Camera& cam, const Vec3& p) {
  const Vec3 c = cam.to_camera(p);
  return {cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy};
}

Vec2 centroid(const Camera& cam, const std::vector<GaussianSet>& sets) {
  Vec3 s = Vec3::Zero();
  double n = 0.0;
  for (const auto& set : sets) {
    for (const auto& g : set.gaussians) {
      s += g.position;
      n += 1.0;
    }
  }
  return project_point(cam, s / n);
}

Vec3 sample_clamped(const Tensor& img, double x, double y) {
  const int h = static_cast<int>(img.dim(0)), w = static_cast<int>(img.dim(1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  Vec3 out;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto at = [&](int yy, int xx) { return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx), c); };
    out[static_cast<int>(c)] = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                               fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1));
  }
  return out;
}

std::string frame_stem(int l) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", l);
  return buf;
}

GaussianSet concat(const std::vector<GaussianSet>& sets) {
  GaussianSet out;
  for (const auto& s : sets) {
    out.gaussians.insert(out.gaussians.end(), s.gaussians.begin(), s.gaussians.end());
    out.vertex_index.insert(out.vertex_index.end(), s.vertex_index.begin(), s.vertex_index.end());
  }
  return out;
}

}  // namespace

const char* perturbation_name(PerturbationType t) {
  switch (t) {
    case PerturbationType::occluder: return "occluder";
    case PerturbationType::illumination: return "illumination";
    case PerturbationType::blur: return "blur";
    case PerturbationType::pose_extreme: return "pose-extreme";
  }
  return "?";
}

PerturbationType perturbation_from_name(const std::string& name) {
  for (auto t : {PerturbationType::occluder, PerturbationType::illumination, PerturbationType::blur,
                 PerturbationType::pose_extreme}) {
    if (name == perturbation_name(t)) return t;
  }
  throw std::invalid_argument("unknown perturbation '" + name + "'");
}

double perturbation_level(const std::string& level) {
  if (level == "low") return 0.2;
  if (level == "medium") return 0.5;
  if (level == "high") return 0.8;
  throw std::invalid_argument("unknown perturbation level '" + level + "'");
}

void SceneConfig::validate() const {
  if (frames < 1) throw std::invalid_argument("scene: frame count must be positive");
  if (width < 16 || height < 16) throw std::invalid_argument("scene: images must be at least 16 x 16");
  if (entities != 1 && entities != 2) throw std::invalid_argument("scene: entity count must be 1 or 2");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw std::invalid_argument("scene: test fraction in [0, 1)");
  for (const auto& p : schedule) {
    if (p.first < 1 || p.last > frames || p.first > p.last) {
      throw std::invalid_argument("scene: perturbation range outside [1, L]");
    }
    if (!(p.strength >= 0.0 && p.strength <= 1.0)) throw std::invalid_argument("scene: strength outside [0, 1]");
  }
  const auto test = static_cast<std::size_t>(std::lround(frames * test_fraction));
  if (unperturbed_frames().size() < test) throw std::invalid_argument("scene: not enough unperturbed frames for the test split");
}

std::vector<int> SceneConfig::unperturbed_frames() const {
  std::vector<int> out;
  for (int l = 1; l <= frames; ++l) {
    if (std::none_of(schedule.begin(), schedule.end(), [l](const Perturbation& p) { return p.covers(l); })) {
      out.push_back(l);
    }
  }
  return out;
}

std::vector<int> SceneConfig::test_frames() const {
  const auto clean = unperturbed_frames();
  const auto count = static_cast<std::size_t>(std::lround(frames * test_fraction));
  std::vector<int> out;
  for (std::size_t i = 0; i < count && !clean.empty(); ++i) {
    out.push_back(clean[(2 * i + 1) * clean.size() / (2 * count)]);
  }
  return out;
}

nlohmann::json scene_config_to_json(const SceneConfig& c) {
  nlohmann::json j;
  j["frames"] = c.frames;
  j["width"] = c.width;
  j["height"] = c.height;
  j["seed"] = c.seed;
  j["entities"] = c.entities;
  j["test_fraction"] = c.test_fraction;
  j["vertices"] = c.vertices;
  j["articulation"] = c.articulation;
  auto& s = j["schedule"] = nlohmann::json::array();
  for (const auto& p : c.schedule) {
    s.push_back({{"type", perturbation_name(p.type)}, {"first", p.first}, {"last", p.last}, {"strength", p.strength}});
  }
  return j;
}

SceneConfig scene_config_from_json(const nlohmann::json& j) {
  SceneConfig c;
  c.frames = j.value("frames", c.frames);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.seed = j.value("seed", c.seed);
  c.entities = j.value("entities", c.entities);
  c.test_fraction = j.value("test_fraction", c.test_fraction);
  c.vertices = j.value("vertices", c.vertices);
  c.articulation = j.value("articulation", c.articulation);
  if (j.contains("schedule")) {
    for (const auto& e : j.at("schedule")) {
      Perturbation p;
      p.type = perturbation_from_name(e.at("type").get<std::string>());
      p.first = e.at("first").get<int>();
      p.last = e.at("last").get<int>();
      const auto& s = e.at("strength");
      p.strength = s.is_string() ? perturbation_level(s.get<std::string>()) : s.get<double>();
      c.schedule.push_back(p);
    }
  }
  return c;
}

void inject_occluder(Tensor& image, Tensor& mask, const Vec2& center, double strength) {
  if (strength <= 0.0) return;
  const std::size_t h = image.dim(0), w = image.dim(1);
  mask.require_shape({h, w}, "occluder mask");
  const double r = 0.25 * static_cast<double>(std::min(h, w)) * strength;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if ((Vec2(double(x), double(y)) - center).squaredNorm() > r * r) continue;
      mask.at(y, x) = 1.0;
      for (std::size_t c = 0; c < 3; ++c) image.at(y, x, c) = kOccluderColor[static_cast<int>(c)];
    }
  }
}

void inject_illumination(Tensor& image, double strength, double t) {
  if (strength <= 0.0) return;
  const double gain = 1.0 + strength * std::sin(std::numbers::pi * std::clamp(t, 0.0, 1.0));
  for (double& v : image.values()) v = std::clamp(v * gain, 0.0, 1.0);
}

void inject_blur(Tensor& image, double strength, const Vec2& direction) {
  const int taps = 1 + static_cast<int>(std::lround(8.0 * strength));
  if (taps <= 1) return;
  const Vec2 dir = direction.norm() > 1e-9 ? Vec2(direction.normalized()) : Vec2(1.0, 0.0);
  const Tensor src = image;
  const std::size_t h = image.dim(0), w = image.dim(1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      Vec3 acc = Vec3::Zero();
      for (int t = 0; t < taps; ++t) {
        const double o = t - 0.5 * (taps - 1);
        acc += sample_clamped(src, double(x) + o * dir.x(), double(y) + o * dir.y());
      }
      acc /= static_cast<double>(taps);
      for (std::size_t c = 0; c < 3; ++c) image.at(y, x, c) = acc[static_cast<int>(c)];
    }
  }
}

Template mirror_template(const Template& t) {
  Template m = t;
  for (std::size_t i = 0; i < m.vertex_count(); ++i) m.rest_vertices.at(i, 0) = -m.rest_vertices.at(i, 0);
  for (auto& j : m.joints) j.rest_position.x() = -j.rest_position.x();
  for (std::size_t s = 0; s < kShapeCoefficients; ++s) {
    for (std::size_t i = 0; i < m.vertex_count(); ++i) m.shape_dirs.at(s, 3 * i) = -m.shape_dirs.at(s, 3 * i);
  }
  return m;
}

GaussianSet oracle_gaussians(const Template& tmpl, const PoseState& h) {
  const PosedMesh posed = pose(tmpl, h, Tensor());
  GaussianSet set;
  const std::size_t n = tmpl.vertex_count();
  set.gaussians.resize(n);
  set.vertex_index.resize(n);
  const double edge = tmpl.mean_edge_length;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t dominant = 0;
    for (std::size_t k = 1; k < tmpl.joint_count(); ++k) {
      if (tmpl.skin_weights.at(i, k) > tmpl.skin_weights.at(i, dominant)) dominant = k;
    }
    const Eigen::Quaterniond q(posed.tape.world_rotations[dominant]);
    Gaussian& g = set.gaussians[i];
    g.position = Vec3(posed.vertices.at(i, 0), posed.vertices.at(i, 1), posed.vertices.at(i, 2));
    g.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
    g.scale = edge * Vec3(0.9, 0.9, 0.55);
    g.opacity = 0.95;
    // Mirrored templates share the texture of the original.
    g.color = texture_color(Vec3(std::abs(tmpl.rest_vertices.at(i, 0)), tmpl.rest_vertices.at(i, 1),
                                 tmpl.rest_vertices.at(i, 2)));
    set.vertex_index[i] = static_cast<int>(i);
  }
  return set;
}

void synthesize(const SceneConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "frames");
  fs::create_directories(out_dir / "clean");
  fs::create_directories(out_dir / "masks");

  Rng rng(config.seed);
  TemplateConfig tc;
  tc.vertices = config.vertices;
  tc.seed = config.seed;
  std::vector<Template> templates{storage_rounded(make_template(tc))};
  if (config.entities == 2) templates.push_back(mirror_template(templates.front()));

  const bool pair = config.entities == 2;
  std::vector<Trajectory> trajectories;
  for (std::size_t e = 0; e < templates.size(); ++e) {
    const Vec3 offset = pair ? Vec3(e == 0 ? 0.75 : -0.75, 0.0, 0.0) : Vec3::Zero();
    trajectories.push_back(make_trajectory(templates[e], rng, config.articulation, offset));
  }
  const double focal = (pair ? 0.5 : 0.95) * 1.8 * config.width;
  const Camera cam = Camera::look_at(Vec3(0.0, 0.25, 4.5), Vec3(0.0, 0.25, 0.0), Vec3(0.0, 1.0, 0.0), focal,
                                     config.width, config.height);

  const int frames = config.frames;
  const std::size_t entities = templates.size();
  const std::size_t pose_width = PoseState::flat_width(templates.front().joint_count());
  Tensor given({static_cast<std::size_t>(frames), entities * pose_width});
  Tensor truth(given.shape());

  auto strength_of = [&](PerturbationType type, int l, double* t) {
    for (const auto& p : config.schedule) {
      if (p.type == type && p.covers(l)) {
        if (t) *t = p.last > p.first ? double(l - p.first) / double(p.last - p.first) : 0.5;
        return p.strength;
      }
    }
    return 0.0;
  };

  auto truth_sets = [&](int l) {
    std::vector<GaussianSet> sets;
    for (std::size_t e = 0; e < entities; ++e) {
      const double extreme = strength_of(PerturbationType::pose_extreme, std::clamp(l, 1, frames), nullptr);
      const PoseState h = storage_rounded_pose(trajectories[e].at(l, frames, 1.0 + 2.0 * extreme));
      sets.push_back(oracle_gaussians(templates[e], h));
    }
    return sets;
  };

  RenderOptions ro;
  ro.sequential = true;
  parallel_for(static_cast<std::size_t>(frames), [&](std::size_t idx) {
    const int l = static_cast<int>(idx) + 1;
    Rng frame_rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(l));
    const double extreme = strength_of(PerturbationType::pose_extreme, l, nullptr);
    for (std::size_t e = 0; e < entities; ++e) {
      const PoseState gt = storage_rounded_pose(trajectories[e].at(l, frames, 1.0 + 2.0 * extreme));
      PoseState fed = storage_rounded_pose(trajectories[e].at(l, frames, 1.0));
      if (extreme > 0.0) {
        for (std::size_t k = 1; k < fed.joint_rotations.size(); ++k) {
          for (int a = 0; a < 3; ++a) fed.joint_rotations[k][a] += 0.1 * extreme * frame_rng.normal();
        }
        fed = storage_rounded_pose(fed);
      }
      const auto gf = gt.flatten(), ff = fed.flatten();
      for (std::size_t c = 0; c < pose_width; ++c) {
        truth.at(idx, e * pose_width + c) = gf[c];
        given.at(idx, e * pose_width + c) = ff[c];
      }
    }

    const auto sets = truth_sets(l);
    const RenderOutput clean = rasterize(concat(sets), cam, ro);
    const Tensor clean_rgb = round_to_storage(clean.rgb);
    Tensor image = clean.rgb;
    const std::size_t h = image.dim(0), w = image.dim(1);
    Tensor entity = silhouette_from_alpha(clean.alpha);
    Tensor occluder({h, w});

    double t = 0.0;
    if (const double s = strength_of(PerturbationType::occluder, l, &t); s > 0.0) {
      const Vec2 c = centroid(cam, sets);
      const Vec2 center = c + Vec2((t - 0.5) * 0.5 * config.width, 0.12 * config.height * std::sin(std::numbers::pi * t));
      inject_occluder(image, occluder, center, s);
    }
    if (const double s = strength_of(PerturbationType::blur, l, nullptr); s > 0.0) {
      const Vec2 dir = centroid(cam, truth_sets(l + 1)) - centroid(cam, truth_sets(l - 1));
      inject_blur(image, s, dir);
    }
    if (const double s = strength_of(PerturbationType::illumination, l, &t); s > 0.0) {
      inject_illumination(image, s, t);
    }
    image = round_to_storage(image);

    Tensor visible({h, w}), background({h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
      visible[p] = entity[p] > 0.5 && occluder[p] < 0.5 ? 1.0 : 0.0;
      background[p] = entity[p] < 0.5 && occluder[p] < 0.5 ? 1.0 : 0.0;
    }
    const std::string stem = frame_stem(l);
    save_wgt(out_dir / "frames" / (stem + ".wgt"), image);
    save_png(out_dir / "frames" / (stem + ".png"), image);
    save_wgt(out_dir / "clean" / (stem + ".wgt"), clean_rgb);
    save_png(out_dir / "clean" / (stem + ".png"), clean_rgb);
    save_png(out_dir / "masks" / (stem + "_entity.png"), visible);
    save_png(out_dir / "masks" / (stem + "_occluder.png"), occluder);
    save_png(out_dir / "masks" / (stem + "_background.png"), background);
    save_png(out_dir / "masks" / (stem + "_silhouette.png"), entity);
  }, true);

  save_wgt(out_dir / "poses.wgt", given);
  save_wgt(out_dir / "gt_poses.wgt", truth);
  save_template(out_dir / "template.wgt", templates[0]);
  if (pair) save_template(out_dir / "template_1.wgt", templates[1]);
  {
    std::ofstream cf(out_dir / "camera.json");
    if (!cf) throw std::runtime_error("cannot write camera.json in " + out_dir.string());
    cf << camera_to_json(cam).dump(2) << "\n";
  }

  nlohmann::json manifest;
  manifest["format"] = "splatfit-scene";
  manifest["version"] = 1;
  manifest["config"] = scene_config_to_json(config);
  manifest["pose_width"] = pose_width;
  manifest["templates"] = pair ? nlohmann::json{"template.wgt", "template_1.wgt"} : nlohmann::json{"template.wgt"};
  auto& table = manifest["frames"] = nlohmann::json::array();
  for (int l = 1; l <= frames; ++l) {
    nlohmann::json rec;
    rec["index"] = l;
    rec["image"] = "frames/" + frame_stem(l) + ".wgt";
    auto& labels = rec["perturbations"] = nlohmann::json::array();
    for (const auto& p : config.schedule) {
      if (p.covers(l)) labels.push_back({{"type", perturbation_name(p.type)}, {"strength", p.strength}});
    }
    table.push_back(rec);
  }
  const auto test = config.test_frames();
  std::vector<int> train;
  for (int l = 1; l <= frames; ++l) {
    if (std::find(test.begin(), test.end(), l) == test.end()) train.push_back(l);
  }
  manifest["split"] = {{"train", train}, {"test", test}};
  std::ofstream mf(out_dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write manifest.json in " + out_dir.string());
  mf << manifest.dump(2) << "\n";
}

}  // namespace splatfit
