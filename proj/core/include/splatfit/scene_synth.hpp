// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatfit/articulated_template.hpp"
#include "splatfit/camera.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

enum class PerturbationType { occluder, illumination, blur, pose_extreme };

const char* perturbation_name(PerturbationType t);
PerturbationType perturbation_from_name(const std::string& name);

/// Strength preset for the named levels low / medium / high.
double perturbation_level(const std::string& level);

struct Perturbation {
  PerturbationType type = PerturbationType::occluder;
  int first = 1;  // inclusive, 1-based
  int last = 1;
  double strength = 0.5;

  bool covers(int frame) const { return frame >= first && frame <= last; }
};

struct SceneConfig {
  int frames = 60;
  int width = 64;
  int height = 64;
  std::vector<Perturbation> schedule;
  std::uint64_t seed = 1;
  int entities = 1;
  double test_fraction = 0.1;
  std::size_t vertices = 512;
  double articulation = 0.6;  // peak finger flexion in radians

  /// Throws std::invalid_argument on out-of-range frames or strengths.
  void validate() const;
  /// Frames not covered by any schedule entry.
  std::vector<int> unperturbed_frames() const;
  /// round(L * test_fraction) frames spread evenly over the unperturbed ones.
  std::vector<int> test_frames() const;
};

nlohmann::json scene_config_to_json(const SceneConfig& c);
SceneConfig scene_config_from_json(const nlohmann::json& j);

inline const Vec3 kOccluderColor{0.15, 0.25, 0.6};

/// Region mask names written next to each frame.
inline const char* const kRegionNames[] = {"entity", "occluder", "background"};

/// Opaque disc composited over `image` (H x W x 3); `mask` receives the
/// covered pixels. Radius 0.25 * min(H, W) * strength.
void inject_occluder(Tensor& image, Tensor& mask, const Vec2& center, double strength);
/// Gain 1 + strength * sin(pi * t) for t in [0, 1] across the range, clamped.
void inject_illumination(Tensor& image, double strength, double t);
/// Normalized line kernel of 1 + round(8 strength) taps along `direction`,
/// bilinear sampling with clamp-to-edge.
void inject_blur(Tensor& image, double strength, const Vec2& direction);

/// Mirror image of a template across x = 0.
Template mirror_template(const Template& t);

/// The hidden ground-truth splats for a posed template.
GaussianSet oracle_gaussians(const Template& tmpl, const PoseState& h);

/// Writes the dataset directory. Throws std::invalid_argument on a bad
/// config and std::runtime_error on I/O failure.
void synthesize(const SceneConfig& config, const std::filesystem::path& out_dir);

}  // namespace splatfit
