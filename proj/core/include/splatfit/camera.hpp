// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "splatfit/gaussian.hpp"

namespace splatfit {

/// Pinhole camera. `rotation` and `translation` map world to camera space;
/// the camera looks down +z and pixel (x, y) is sampled at integer
/// coordinates.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  /// Throws std::invalid_argument if focal lengths or image size are not
  /// positive.
  void validate() const;
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Camera at `eye` looking at `target` with `up` roughly the image -y.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int width, int height);
};

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

}  // namespace splatfit
