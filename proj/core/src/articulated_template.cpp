// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include "splatfit/articulated_template.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "splatfit/errors.hpp"
#include "splatfit/random.hpp"
#include "splatfit/wgt_io.hpp"

namespace splatfit {
namespace {

constexpr double kShapeRms = 0.02;

Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return k;
}

Vec3 row3(const Tensor& t, std::size_t r) { return Vec3(t.at(r, 0), t.at(r, 1), t.at(r, 2)); }

void set_row3(Tensor& t, std::size_t r, const Vec3& v) {
  t.at(r, 0) = v.x();
  t.at(r, 1) = v.y();
  t.at(r, 2) = v.z();
}

std::vector<std::vector<int>> knn_adjacency(const Tensor& v, int k) {
  const std::size_t n = v.rows();
  std::vector<std::set<int>> adj(n);
  std::vector<std::pair<double, int>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = row3(v, i);
    for (std::size_t j = 0; j < n; ++j) d[j] = {(row3(v, j) - p).squaredNorm(), static_cast<int>(j)};
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k) + 1, n);
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    for (std::size_t m = 0; m < kk; ++m) {
      const int j = d[m].second;
      if (j == static_cast<int>(i)) continue;
      adj[i].insert(j);
      adj[static_cast<std::size_t>(j)].insert(static_cast<int>(i));
    }
  }
  std::vector<std::vector<int>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(adj[i].begin(), adj[i].end());
  return out;
}

}  // namespace

Template make_template(const TemplateConfig& config) {
  if (config.joints < 2) throw std::invalid_argument("template needs a root and at least one branch");
  const std::size_t branches = config.joints - 1;
  const std::size_t n = config.vertices;
  const std::size_t per_branch = n / (2 * branches);
  const std::size_t palm_count = n - per_branch * branches;
  if (per_branch < 4 || palm_count < 16) throw std::invalid_argument("template vertex count too small");

  Rng rng(config.seed);
  Template t;
  t.rest_vertices = Tensor({n, 3});
  t.skin_weights = Tensor({n, config.joints});
  const Vec3 semi(0.45 + 0.04 * rng.uniform(-1, 1), 0.5 + 0.04 * rng.uniform(-1, 1), 0.12);

  t.joints.push_back({-1, Vec3::Zero()});
  std::vector<Vec3> dirs;
  std::vector<double> lengths;
  for (std::size_t b = 0; b < branches; ++b) {
    // Fan the branches across the upper rim, the last one (thumb-like) off to the side.
    double angle = b + 1 < branches || branches == 1
                       ? std::numbers::pi * (0.3 + 0.4 * (branches > 2 ? double(b) / double(branches - 2) : 0.5))
                       : std::numbers::pi * 1.1;
    angle += 0.04 * rng.uniform(-1, 1);
    const Vec3 dir(std::cos(angle), std::sin(angle), 0.0);
    const Vec3 base(semi.x() * dir.x() * 0.92, semi.y() * dir.y() * 0.92, 0.0);
    t.joints.push_back({0, base});
    dirs.push_back(dir);
    lengths.push_back((b + 1 < branches ? 0.55 : 0.42) + 0.06 * rng.uniform(-1, 1));
  }

  // Palm: Fibonacci points on the ellipsoid.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < palm_count; ++i) {
    const double zc = 1.0 - 2.0 * (i + 0.5) / palm_count;
    const double r = std::sqrt(std::max(0.0, 1.0 - zc * zc));
    const double phi = golden * i;
    const Vec3 p(semi.x() * r * std::cos(phi), semi.y() * r * std::sin(phi), semi.z() * zc);
    set_row3(t.rest_vertices, i, p);
    double branch_total = 0.0;
    for (std::size_t b = 0; b < branches; ++b) {
      const double dist = (p - t.joints[b + 1].rest_position).norm();
      const double w = 0.5 * std::max(0.0, 1.0 - dist / 0.15);
      t.skin_weights.at(i, b + 1) = w;
      branch_total += w;
    }
    if (branch_total > 0.5) {
      for (std::size_t b = 0; b < branches; ++b) t.skin_weights.at(i, b + 1) *= 0.5 / branch_total;
      branch_total = 0.5;
    }
    t.skin_weights.at(i, 0) = 1.0 - branch_total;
  }

  // Branches: spiral samples on a tapered cylinder.
  const double radius = 0.075;
  std::size_t v = palm_count;
  for (std::size_t b = 0; b < branches; ++b) {
    const Vec3 dir = dirs[b];
    const Vec3 side = Vec3::UnitZ().cross(dir).normalized();
    const Vec3 up = Vec3::UnitZ();
    for (std::size_t i = 0; i < per_branch; ++i, ++v) {
      const double u = (i + 0.5) / per_branch;
      const double phi = golden * i;
      const double rr = radius * (1.0 - 0.3 * u);
      const Vec3 p = t.joints[b + 1].rest_position + dir * (u * lengths[b]) +
                     rr * (std::cos(phi) * side + std::sin(phi) * up);
      set_row3(t.rest_vertices, v, p);
      const double w = std::min(1.0, 0.5 + 2.0 * u);
      t.skin_weights.at(v, b + 1) = w;
      t.skin_weights.at(v, 0) = 1.0 - w;
    }
  }

  t.neighbors = knn_adjacency(t.rest_vertices, config.neighbors);
  double edge_sum = 0.0;
  std::size_t edge_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : t.neighbors[i]) {
      edge_sum += (row3(t.rest_vertices, i) - row3(t.rest_vertices, static_cast<std::size_t>(j))).norm();
      ++edge_count;
    }
  }
  t.mean_edge_length = edge_count ? edge_sum / edge_count : 0.0;

  // Smooth random displacement fields, Gram-Schmidt orthogonalized.
  t.shape_dirs = Tensor({kShapeCoefficients, 3 * n});
  for (std::size_t s = 0; s < kShapeCoefficients; ++s) {
    Mat3 a;
    for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = rng.normal();
    const Vec3 amp(rng.normal(), rng.normal(), rng.normal());
    const Vec3 freq(rng.uniform(1, 3), rng.uniform(1, 3), rng.uniform(1, 3));
    const Vec3 phase(rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28));
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = row3(t.rest_vertices, i);
      Vec3 d = a * p;
      for (int k = 0; k < 3; ++k) d[k] += amp[k] * std::sin(freq[k] * p[(k + 1) % 3] + phase[k]);
      for (int k = 0; k < 3; ++k) t.shape_dirs.at(s, 3 * i + k) = d[k];
    }
    for (std::size_t prev = 0; prev < s; ++prev) {
      double dot = 0.0;
      for (std::size_t c = 0; c < 3 * n; ++c) dot += t.shape_dirs.at(s, c) * t.shape_dirs.at(prev, c);
      const double norm2 = static_cast<double>(n) * kShapeRms * kShapeRms;
      for (std::size_t c = 0; c < 3 * n; ++c) t.shape_dirs.at(s, c) -= dot / norm2 * t.shape_dirs.at(prev, c);
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < 3 * n; ++c) norm += t.shape_dirs.at(s, c) * t.shape_dirs.at(s, c);
    const double scale = std::sqrt(static_cast<double>(n)) * kShapeRms / std::sqrt(norm);
    for (std::size_t c = 0; c < 3 * n; ++c) t.shape_dirs.at(s, c) *= scale;
  }
  validate_template(t);
  return t;
}

void validate_template(const Template& t) {
  const std::size_t n = t.vertex_count();
  const std::size_t j = t.joint_count();
  t.skin_weights.require_shape({n, j}, "skin weights");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < j; ++k) s += t.skin_weights.at(i, k);
    if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("skin weights row does not sum to 1");
  }
  for (std::size_t k = 0; k < j; ++k) {
    const int p = t.joints[k].parent;
    if ((k == 0 && p != -1) || (k > 0 && (p < 0 || p >= static_cast<int>(k)))) {
      throw std::invalid_argument("joint hierarchy must list parents before children");
    }
  }
  if (t.neighbors.size() != n) throw std::invalid_argument("adjacency size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    for (int m : t.neighbors[i]) {
      const auto& back = t.neighbors[static_cast<std::size_t>(m)];
      if (!std::binary_search(back.begin(), back.end(), static_cast<int>(i))) {
        throw std::invalid_argument("adjacency is not symmetric");
      }
    }
  }
}

PoseState PoseState::zero(std::size_t joints) {
  PoseState h;
  h.joint_rotations.assign(joints, Vec3::Zero());
  return h;
}

std::vector<double> PoseState::flatten() const {
  std::vector<double> out;
  out.reserve(flat_width());
  for (const auto& r : joint_rotations) out.insert(out.end(), {r.x(), r.y(), r.z()});
  out.insert(out.end(), shape.begin(), shape.end());
  out.insert(out.end(), {translation.x(), translation.y(), translation.z()});
  return out;
}

PoseState PoseState::unflatten(std::span<const double> flat, std::size_t joints) {
  if (flat.size() != flat_width(joints)) throw DimensionError("pose vector has wrong width");
  PoseState h = zero(joints);
  std::size_t o = 0;
  for (auto& r : h.joint_rotations) {
    r = Vec3(flat[o], flat[o + 1], flat[o + 2]);
    o += 3;
  }
  for (auto& s : h.shape) s = flat[o++];
  h.translation = Vec3(flat[o], flat[o + 1], flat[o + 2]);
  return h;
}

PoseState PoseState::operator+(const PoseState& o) const {
  const auto a = flatten();
  const auto b = o.flatten();
  if (a.size() != b.size()) throw DimensionError("pose sum over different joint counts");
  std::vector<double> s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = a[i] + b[i];
  return unflatten(s, joint_rotations.size());
}

bool PoseState::all_finite() const {
  for (double v : flatten()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PoseState PoseState::wrapped() const {
  PoseState h = *this;
  for (auto& r : h.joint_rotations) {
    for (int k = 0; k < 3; ++k) r[k] = std::remainder(r[k], 2.0 * std::numbers::pi);
  }
  return h;
}

Mat3 axis_angle_matrix(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  double a, b;
  if (theta2 < 1e-16) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

std::array<Mat3, 3> axis_angle_jacobian(const Vec3& w) {
  std::array<Mat3, 3> out;
  const double theta2 = w.squaredNorm();
  if (theta2 < 1e-14) {
    for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = skew(Vec3::Unit(i));
    return out;
  }
  const Mat3 r = axis_angle_matrix(w);
  const Mat3 k = skew(w);
  const Mat3 i_minus_r = Mat3::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    out[static_cast<std::size_t>(i)] = (w[i] * k + skew(w.cross(i_minus_r * e))) / theta2 * r;
  }
  return out;
}

PosedMesh pose(const Template& tmpl, const PoseState& h, const Tensor& offsets) {
  const std::size_t n = tmpl.vertex_count();
  const std::size_t nj = tmpl.joint_count();
  if (h.joint_rotations.size() != nj) throw DimensionError("pose joint count does not match template");
  if (!h.all_finite()) throw std::invalid_argument("pose: non-finite pose parameters");
  if (!offsets.empty()) offsets.require_shape({n, 3}, "pose offsets");

  PosedMesh out;
  PoseTape& tape = out.tape;
  tape.base_vertices = tmpl.rest_vertices;
  for (std::size_t s = 0; s < kShapeCoefficients; ++s) {
    const double beta = h.shape[s];
    if (beta == 0.0) continue;
    for (std::size_t c = 0; c < 3 * n; ++c) tape.base_vertices[c] += beta * tmpl.shape_dirs.at(s, c);
  }
  if (!offsets.empty()) tape.base_vertices += offsets;

  tape.local_rotations.resize(nj);
  tape.world_rotations.resize(nj);
  tape.world_translations.resize(nj);
  for (std::size_t k = 0; k < nj; ++k) {
    const Mat3 r = axis_angle_matrix(h.joint_rotations[k]);
    const Vec3& jk = tmpl.joints[k].rest_position;
    tape.local_rotations[k] = r;
    const int p = tmpl.joints[k].parent;
    if (p < 0) {
      tape.world_rotations[k] = r;
      tape.world_translations[k] = jk - r * jk;
    } else {
      const auto pp = static_cast<std::size_t>(p);
      tape.world_rotations[k] = tape.world_rotations[pp] * r;
      tape.world_translations[k] = tape.world_rotations[pp] * (jk - r * jk) + tape.world_translations[pp];
    }
  }

  out.vertices = Tensor({n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 b = row3(tape.base_vertices, i);
    Vec3 v = h.translation;
    for (std::size_t k = 0; k < nj; ++k) {
      const double w = tmpl.skin_weights.at(i, k);
      if (w == 0.0) continue;
      v += w * (tape.world_rotations[k] * b + tape.world_translations[k]);
    }
    set_row3(out.vertices, i, v);
  }
  return out;
}

PoseGrad pose_backward(const Template& tmpl, const PoseState& h, const PoseTape& tape, const Tensor& upstream) {
  const std::size_t n = tmpl.vertex_count();
  const std::size_t nj = tmpl.joint_count();
  upstream.require_shape({n, 3}, "pose_backward upstream");

  PoseGrad g;
  g.pose.assign(PoseState::flat_width(nj), 0.0);
  g.offsets = Tensor({n, 3});
  std::vector<Mat3> d_world_r(nj, Mat3::Zero());
  std::vector<Vec3> d_world_t(nj, Vec3::Zero());
  Vec3 d_translation = Vec3::Zero();

  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 u = row3(upstream, i);
    if (u.isZero(0.0)) continue;
    d_translation += u;
    const Vec3 b = row3(tape.base_vertices, i);
    Vec3 db = Vec3::Zero();
    for (std::size_t k = 0; k < nj; ++k) {
      const double w = tmpl.skin_weights.at(i, k);
      if (w == 0.0) continue;
      db += w * (tape.world_rotations[k].transpose() * u);
      d_world_r[k] += w * u * b.transpose();
      d_world_t[k] += w * u;
    }
    set_row3(g.offsets, i, db);
  }

  std::vector<Mat3> d_local(nj, Mat3::Zero());
  for (std::size_t k = nj; k-- > 0;) {
    const Vec3& jk = tmpl.joints[k].rest_position;
    const Mat3& r = tape.local_rotations[k];
    const int p = tmpl.joints[k].parent;
    if (p < 0) {
      d_local[k] = d_world_r[k] - d_world_t[k] * jk.transpose();
    } else {
      const auto pp = static_cast<std::size_t>(p);
      const Mat3& rp = tape.world_rotations[pp];
      d_world_r[pp] += d_world_r[k] * r.transpose() + d_world_t[k] * (jk - r * jk).transpose();
      d_world_t[pp] += d_world_t[k];
      d_local[k] = rp.transpose() * d_world_r[k] - rp.transpose() * d_world_t[k] * jk.transpose();
    }
  }

  for (std::size_t k = 0; k < nj; ++k) {
    const auto jac = axis_angle_jacobian(h.joint_rotations[k]);
    for (int a = 0; a < 3; ++a) g.pose[3 * k + a] = d_local[k].cwiseProduct(jac[static_cast<std::size_t>(a)]).sum();
  }
  for (std::size_t s = 0; s < kShapeCoefficients; ++s) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 3 * n; ++c) acc += tmpl.shape_dirs.at(s, c) * g.offsets[c];
    g.pose[3 * nj + s] = acc;
  }
  for (int a = 0; a < 3; ++a) g.pose[3 * nj + kShapeCoefficients + a] = d_translation[a];
  return g;
}

double laplacian_energy(const Tensor& v, const std::vector<std::vector<int>>& neighbors) {
  const std::size_t n = v.rows();
  if (neighbors.size() != n) throw DimensionError("laplacian: adjacency size mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbors[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (int m : neighbors[i]) mean += row3(v, static_cast<std::size_t>(m));
    mean /= static_cast<double>(neighbors[i].size());
    e += (row3(v, i) - mean).squaredNorm();
  }
  return n ? e / static_cast<double>(n) : 0.0;
}

Tensor laplacian_energy_backward(const Tensor& v, const std::vector<std::vector<int>>& neighbors) {
  const std::size_t n = v.rows();
  if (neighbors.size() != n) throw DimensionError("laplacian: adjacency size mismatch");
  Tensor g({n, 3});
  if (n == 0) return g;
  const double scale = 2.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbors[i].empty()) continue;
    Vec3 mean = Vec3::Zero();
    for (int m : neighbors[i]) mean += row3(v, static_cast<std::size_t>(m));
    const double inv = 1.0 / static_cast<double>(neighbors[i].size());
    const Vec3 delta = (row3(v, i) - mean * inv) * scale;
    set_row3(g, i, row3(g, i) + delta);
    for (int m : neighbors[i]) {
      const auto mm = static_cast<std::size_t>(m);
      set_row3(g, mm, row3(g, mm) - delta * inv);
    }
  }
  return g;
}

Tensor silhouette_from_alpha(const Tensor& alpha, double threshold) {
  Tensor mask(alpha.shape());
  for (std::size_t i = 0; i < alpha.size(); ++i) mask[i] = alpha[i] > threshold ? 1.0 : 0.0;
  return mask;
}

Tensor silhouette(const GaussianSet& set, const Camera& cam, double threshold, const RenderOptions& options) {
  return silhouette_from_alpha(rasterize(set, cam, options).alpha, threshold);
}

void save_template(const std::filesystem::path& wgt_path, const Template& t) {
  const std::size_t nj = t.joint_count();
  Tensor joints({nj, 3});
  for (std::size_t k = 0; k < nj; ++k) set_row3(joints, k, t.joints[k].rest_position);
  nlohmann::json meta;
  meta["kind"] = "articulated-template";
  std::vector<int> parents;
  for (const auto& j : t.joints) parents.push_back(j.parent);
  meta["parents"] = parents;
  meta["adjacency"] = t.neighbors;
  meta["mean_edge_length"] = t.mean_edge_length;
  save_archive(wgt_path,
               {{"rest_vertices", t.rest_vertices},
                {"skin_weights", t.skin_weights},
                {"shape_dirs", t.shape_dirs},
                {"joint_rest_positions", joints}},
               meta);
}

Template load_template(const std::filesystem::path& wgt_path) {
  const auto archive = load_archive(wgt_path);
  Template t;
  t.rest_vertices = archive.get("rest_vertices");
  t.skin_weights = archive.get("skin_weights");
  t.shape_dirs = archive.get("shape_dirs");
  const auto& joints = archive.get("joint_rest_positions");
  const auto parents = archive.meta.at("parents").get<std::vector<int>>();
  for (std::size_t k = 0; k < parents.size(); ++k) t.joints.push_back({parents[k], row3(joints, k)});
  t.neighbors = archive.meta.at("adjacency").get<std::vector<std::vector<int>>>();
  t.mean_edge_length = archive.meta.at("mean_edge_length").get<double>();
  validate_template(t);
  return t;
}

Template storage_rounded(const Template& t) {
  Template r = t;
  r.rest_vertices = round_to_storage(t.rest_vertices);
  r.skin_weights = round_to_storage(t.skin_weights);
  r.shape_dirs = round_to_storage(t.shape_dirs);
  for (auto& j : r.joints) j.rest_position = j.rest_position.cast<float>().cast<double>();
  return r;
}

}  // namespace splatfit
