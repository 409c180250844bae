// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "splatfit/errors.hpp"
#include "splatfit/wgt_io.hpp"

namespace splatfit {
namespace {

template <class T>
AttributeArray flatten_fields(const T& g) {
  AttributeArray a{};
  a[0] = g.position.x();
  a[1] = g.position.y();
  a[2] = g.position.z();
  a[3] = g.opacity;
  for (int i = 0; i < 4; ++i) a[4 + i] = g.rotation[i];
  for (int i = 0; i < 3; ++i) a[8 + i] = g.scale[i];
  for (int i = 0; i < 3; ++i) a[11 + i] = g.color[i];
  return a;
}

template <class T>
T unflatten_fields(const AttributeArray& a) {
  T g;
  g.position = Vec3(a[0], a[1], a[2]);
  g.opacity = a[3];
  g.rotation = Vec4(a[4], a[5], a[6], a[7]);
  g.scale = Vec3(a[8], a[9], a[10]);
  g.color = Vec3(a[11], a[12], a[13]);
  return g;
}

// d/dq of the unit quaternion q/|q| applied to an upstream gradient.
Vec4 normalize_backward(const Vec4& q, const Vec4& upstream) {
  const double n = q.norm();
  const Vec4 u = q / n;
  return (upstream - u * u.dot(upstream)) / n;
}

}  // namespace

AttributeArray AttributeVector::flatten() const { return flatten_fields(*this); }
AttributeVector AttributeVector::unflatten(const AttributeArray& a) { return unflatten_fields<AttributeVector>(a); }
AttributeArray Gaussian::flatten() const { return flatten_fields(*this); }
Gaussian Gaussian::unflatten(const AttributeArray& a) { return unflatten_fields<Gaussian>(a); }

AttributeVector& AttributeVector::operator+=(const AttributeVector& o) {
  position += o.position;
  opacity += o.opacity;
  rotation += o.rotation;
  scale += o.scale;
  color += o.color;
  return *this;
}

AttributeVector AttributeVector::operator*(double s) const {
  AttributeVector r = *this;
  r.position *= s;
  r.opacity *= s;
  r.rotation *= s;
  r.scale *= s;
  r.color *= s;
  return r;
}

double AttributeVector::l1_norm() const {
  double n = 0.0;
  for (double v : flatten()) n += std::abs(v);
  return n;
}

Gaussian apply_bias(const Gaussian& g, const AttributeBias& delta) {
  Gaussian out;
  out.position = g.position + delta.position;
  out.opacity = std::clamp(g.opacity + delta.opacity, 0.0, 1.0);
  const Vec4 q = g.rotation + delta.rotation;
  const double qn = q.norm();
  out.rotation = qn > 0.0 ? Vec4(q / qn) : Vec4(1.0, 0.0, 0.0, 0.0);
  for (int i = 0; i < 3; ++i) {
    out.scale[i] = std::max(g.scale[i] + delta.scale[i], kMinScale);
    out.color[i] = std::clamp(g.color[i] + delta.color[i], 0.0, 1.0);
  }
  return out;
}

AttributeVector apply_bias_backward(const Gaussian& g, const AttributeBias& delta, const GaussianGrad& upstream) {
  AttributeVector d;
  d.position = upstream.position;
  const double o = g.opacity + delta.opacity;
  d.opacity = (o >= 0.0 && o <= 1.0) ? upstream.opacity : 0.0;
  const Vec4 q = g.rotation + delta.rotation;
  d.rotation = q.norm() > 0.0 ? normalize_backward(q, upstream.rotation) : Vec4::Zero();
  for (int i = 0; i < 3; ++i) {
    d.scale[i] = g.scale[i] + delta.scale[i] >= kMinScale ? upstream.scale[i] : 0.0;
    const double c = g.color[i] + delta.color[i];
    d.color[i] = (c >= 0.0 && c <= 1.0) ? upstream.color[i] : 0.0;
  }
  return d;
}

Mat3 rotation_matrix(const Vec4& q_raw) {
  const double n = q_raw.norm();
  if (!(n > 0.0)) throw std::invalid_argument("rotation_matrix: zero-norm quaternion");
  const Vec4 q = q_raw / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 rotation_matrix_backward(const Vec4& q_raw, const Mat3& g) {
  const double n = q_raw.norm();
  if (!(n > 0.0)) throw std::invalid_argument("rotation_matrix_backward: zero-norm quaternion");
  const Vec4 q = q_raw / n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d;
  d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - 2.0 * x * g(2, 2));
  d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2.0 * y * g(2, 2));
  d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
  return normalize_backward(q_raw, d);
}

Mat3 covariance3d(const Vec4& q, const Vec3& s) {
  const Mat3 r = rotation_matrix(q);
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

CovarianceGrad covariance3d_backward(const Vec4& q, const Vec3& s, const Mat3& upstream) {
  const Mat3 r = rotation_matrix(q);
  const Mat3 m = r * s.asDiagonal();
  const Mat3 dm = (upstream + upstream.transpose()) * m;
  CovarianceGrad out;
  Mat3 dr;
  for (int j = 0; j < 3; ++j) {
    out.scale[j] = dm.col(j).dot(r.col(j));
    dr.col(j) = dm.col(j) * s[j];
  }
  out.rotation = rotation_matrix_backward(q, dr);
  return out;
}

void save_gaussian_set(const std::filesystem::path& wgt_path, const GaussianSet& set) {
  const std::size_t n = set.size();
  Tensor p({n, 3}), o({n, 1}), q({n, 4}), s({n, 3}), c({n, 3}), idx({n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = set.gaussians[i];
    for (int k = 0; k < 3; ++k) {
      p.at(i, k) = g.position[k];
      s.at(i, k) = g.scale[k];
      c.at(i, k) = g.color[k];
    }
    o.at(i, 0) = g.opacity;
    for (int k = 0; k < 4; ++k) q.at(i, k) = g.rotation[k];
    idx[i] = i < set.vertex_index.size() ? set.vertex_index[i] : static_cast<double>(i);
  }
  save_archive(wgt_path, {{"position", p}, {"opacity", o}, {"rotation", q}, {"scale", s}, {"color", c},
                          {"vertex_index", idx}},
               {{"kind", "gaussian-set"}, {"count", n}});
}

GaussianSet load_gaussian_set(const std::filesystem::path& wgt_path) {
  const auto archive = load_archive(wgt_path);
  const auto& p = archive.get("position");
  const std::size_t n = p.dim(0);
  const auto& o = archive.get("opacity");
  const auto& q = archive.get("rotation");
  const auto& s = archive.get("scale");
  const auto& c = archive.get("color");
  const auto& idx = archive.get("vertex_index");
  GaussianSet set;
  for (std::size_t i = 0; i < n; ++i) {
    Gaussian g;
    g.position = Vec3(p.at(i, 0), p.at(i, 1), p.at(i, 2));
    g.opacity = o.at(i, 0);
    g.rotation = Vec4(q.at(i, 0), q.at(i, 1), q.at(i, 2), q.at(i, 3));
    g.scale = Vec3(s.at(i, 0), s.at(i, 1), s.at(i, 2));
    g.color = Vec3(c.at(i, 0), c.at(i, 1), c.at(i, 2));
    set.gaussians.push_back(g);
    set.vertex_index.push_back(static_cast<int>(idx[i]));
  }
  return set;
}

}  // namespace splatfit
