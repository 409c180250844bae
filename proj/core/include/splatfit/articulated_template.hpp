// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splatfit/camera.hpp"
#include "splatfit/gaussian.hpp"
#include "splatfit/rasterizer.hpp"
#include "splatfit/tensor.hpp"

namespace splatfit {

inline constexpr std::size_t kShapeCoefficients = 10;

struct Joint {
  int parent = -1;  // parents precede children
  Vec3 rest_position = Vec3::Zero();
};

/// Skinned template: an ellipsoid palm with one single-bone branch per
/// finger joint.
struct Template {
  Tensor rest_vertices;  // N x 3
  std::vector<Joint> joints;
  Tensor skin_weights;  // N x J, rows sum to 1
  Tensor shape_dirs;    // kShapeCoefficients x 3N, orthogonal rows
  std::vector<std::vector<int>> neighbors;
  double mean_edge_length = 0.0;

  std::size_t vertex_count() const { return rest_vertices.rows(); }
  std::size_t joint_count() const { return joints.size(); }
};

struct TemplateConfig {
  std::size_t vertices = 512;
  std::size_t joints = 6;  // root + one per branch
  int neighbors = 6;
  std::uint64_t seed = 1;
};

Template make_template(const TemplateConfig& config);

/// Throws std::invalid_argument when rows do not sum to one (within 1e-6), adjacency is
/// asymmetric or a parent does not precede its child.
void validate_template(const Template& t);

/// Articulation (axis-angle per joint), shape coefficients and translation.
struct PoseState {
  std::vector<Vec3> joint_rotations;
  std::array<double, kShapeCoefficients> shape{};
  Vec3 translation = Vec3::Zero();

  static PoseState zero(std::size_t joints);
  static std::size_t flat_width(std::size_t joints) { return 3 * joints + kShapeCoefficients + 3; }
  std::size_t flat_width() const { return flat_width(joint_rotations.size()); }
  std::vector<double> flatten() const;
  static PoseState unflatten(std::span<const double> flat, std::size_t joints);
  PoseState operator+(const PoseState& o) const;
  bool all_finite() const;
  /// Wraps each rotation component into [-pi, pi].
  PoseState wrapped() const;
};

Mat3 axis_angle_matrix(const Vec3& w);
/// d R(w) / d w_i for i = 0..2.
std::array<Mat3, 3> axis_angle_jacobian(const Vec3& w);

struct PoseTape {
  Tensor base_vertices;  // rest + shape + offsets, N x 3
  std::vector<Mat3> local_rotations;
  std::vector<Mat3> world_rotations;
  std::vector<Vec3> world_translations;
};

struct PosedMesh {
  Tensor vertices;  // N x 3
  PoseTape tape;
};

/// V = LBS(rest + shape(beta) + offsets, theta) + t. `offsets` may be empty.
/// Throws std::invalid_argument on a non-finite pose.
PosedMesh pose(const Template& tmpl, const PoseState& h, const Tensor& offsets);

struct PoseGrad {
  std::vector<double> pose;  // flattened PoseState layout
  Tensor offsets;            // N x 3
};

PoseGrad pose_backward(const Template& tmpl, const PoseState& h, const PoseTape& tape, const Tensor& upstream);

/// sum_n |V_n - mean(neighbors of n)|^2 / N; isolated vertices contribute 0.
double laplacian_energy(const Tensor& vertices, const std::vector<std::vector<int>>& neighbors);
Tensor laplacian_energy_backward(const Tensor& vertices, const std::vector<std::vector<int>>& neighbors);

/// alpha > threshold as a 0/1 H x W mask.
Tensor silhouette_from_alpha(const Tensor& alpha, double threshold = 0.5);
Tensor silhouette(const GaussianSet& set, const Camera& cam, double threshold = 0.5,
                  const RenderOptions& options = {});

void save_template(const std::filesystem::path& wgt_path, const Template& t);
Template load_template(const std::filesystem::path& wgt_path);

/// Every value rounded through float32, so a saved-then-loaded template is
/// identical to the in-memory one.
Template storage_rounded(const Template& t);

}  // namespace splatfit
