// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatfit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;  // quaternions are (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

/// Flattened attribute width: position 3, opacity 1, rotation 4, scale 3, color 3.
inline constexpr std::size_t kAttributeWidth = 14;
using AttributeArray = std::array<double, kAttributeWidth>;

inline constexpr double kMinScale = 1e-6;

/// Fourteen attributes of one splat without validity constraints. Used for
/// additive biases and for gradients with respect to a Gaussian.
struct AttributeVector {
  Vec3 position = Vec3::Zero();
  double opacity = 0.0;
  Vec4 rotation = Vec4::Zero();
  Vec3 scale = Vec3::Zero();
  Vec3 color = Vec3::Zero();

  AttributeArray flatten() const;
  static AttributeVector unflatten(const AttributeArray& a);
  AttributeVector& operator+=(const AttributeVector& o);
  AttributeVector operator*(double s) const;
  double l1_norm() const;
};

using AttributeBias = AttributeVector;
using GaussianGrad = AttributeVector;

/// One splat. Valid when the rotation is unit length, scales are positive and
/// opacity/color lie in [0, 1].
struct Gaussian {
  Vec3 position = Vec3::Zero();
  double opacity = 1.0;
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec3 scale = Vec3::Constant(0.01);
  Vec3 color = Vec3::Constant(0.5);

  AttributeArray flatten() const;
  static Gaussian unflatten(const AttributeArray& a);
};

struct GaussianSet {
  std::vector<Gaussian> gaussians;
  std::vector<int> vertex_index;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }
};

/// g + delta with the rotation renormalized, opacity and color clamped to
/// [0, 1] and scale clamped to >= kMinScale. A zero-length rotation falls
/// back to the identity.
Gaussian apply_bias(const Gaussian& g, const AttributeBias& delta);

/// Vector-Jacobian product of apply_bias. The sum g + delta is the only
/// thing apply_bias sees, so the returned gradient is shared by g and delta.
/// Clamped components pass zero gradient.
AttributeVector apply_bias_backward(const Gaussian& g, const AttributeBias& delta,
                                    const GaussianGrad& upstream);

/// Rotation matrix of q / |q|. Throws std::invalid_argument on |q| == 0.
Mat3 rotation_matrix(const Vec4& q);

/// R(q) diag(s^2) R(q)^T, with q normalized internally.
Mat3 covariance3d(const Vec4& q, const Vec3& s);

struct CovarianceGrad {
  Vec4 rotation = Vec4::Zero();
  Vec3 scale = Vec3::Zero();
};

/// Gradient of <upstream, covariance3d(q, s)>, including the normalization
/// of q.
CovarianceGrad covariance3d_backward(const Vec4& q, const Vec3& s, const Mat3& upstream);

/// Gradient of <upstream, rotation_matrix(q)> with respect to unnormalized q.
Vec4 rotation_matrix_backward(const Vec4& q, const Mat3& upstream);

/// One tensor per attribute (N x width), plus vertex_index, in one archive.
void save_gaussian_set(const std::filesystem::path& wgt_path, const GaussianSet& set);
GaussianSet load_gaussian_set(const std::filesystem::path& wgt_path);

}  // namespace splatfit
