// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "splatfit/articulated_template.hpp"
#include "splatfit/errors.hpp"
#include "splatfit/gradcheck.hpp"
#include "splatfit/random.hpp"

using namespace splatfit;

namespace {

// Two joints on the x axis, four rigidly skinned vertices per bone.
Template two_bone_chain() {
  Template t;
  t.joints = {Joint{-1, Vec3::Zero()}, Joint{0, Vec3(1, 0, 0)}};
  t.rest_vertices = Tensor({8, 3});
  t.skin_weights = Tensor({8, 2});
  t.shape_dirs = Tensor({kShapeCoefficients, 24});
  for (std::size_t i = 0; i < 8; ++i) {
    const double x = 0.25 + 0.5 * static_cast<double>(i / 2);
    t.rest_vertices.at(i, 0) = x;
    t.rest_vertices.at(i, 1) = i % 2 == 0 ? 0.1 : -0.1;
    t.rest_vertices.at(i, 2) = 0.05 * static_cast<double>(i);
    t.skin_weights.at(i, x < 1.0 ? 0 : 1) = 1.0;
  }
  t.neighbors.resize(8);
  return t;
}

PoseState random_pose(Rng& rng, std::size_t joints, double spread) {
  PoseState h = PoseState::zero(joints);
  for (auto& w : h.joint_rotations) w = spread * Vec3(rng.normal(), rng.normal(), rng.normal());
  for (double& b : h.shape) b = 0.1 * rng.normal();
  h.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
  return h;
}

Vec3 row(const Tensor& t, std::size_t i) { return Vec3(t.at(i, 0), t.at(i, 1), t.at(i, 2)); }

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("generated template is well formed") {
  const Template t = make_template(TemplateConfig{});
  CHECK(t.vertex_count() == 512);
  CHECK(t.joint_count() == 6);
  CHECK_NOTHROW(validate_template(t));
  for (std::size_t i = 0; i < t.vertex_count(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < t.joint_count(); ++k) {
      CHECK(t.skin_weights.at(i, k) >= 0.0);
      s += t.skin_weights.at(i, k);
    }
    CHECK(std::abs(s - 1.0) < 1e-6);
    for (int j : t.neighbors[i]) {
      const auto& back = t.neighbors[static_cast<std::size_t>(j)];
      CHECK(std::find(back.begin(), back.end(), static_cast<int>(i)) != back.end());
      CHECK(j != static_cast<int>(i));
    }
  }
  for (std::size_t k = 0; k < t.joint_count(); ++k) CHECK(t.joints[k].parent < static_cast<int>(k));
  CHECK(t.mean_edge_length > 0.0);

  const Template again = make_template(TemplateConfig{});
  CHECK(again.rest_vertices == t.rest_vertices);
  CHECK(again.skin_weights == t.skin_weights);
}

TEST_CASE("validate_template rejects broken templates") {
  Template t = two_bone_chain();
  CHECK_NOTHROW(validate_template(t));
  Template rows = t;
  rows.skin_weights.at(0, 1) = 0.5;
  CHECK_THROWS_AS(validate_template(rows), std::invalid_argument);
  Template order = t;
  order.joints[0].parent = 1;
  order.joints[1].parent = -1;
  CHECK_THROWS_AS(validate_template(order), std::invalid_argument);
  Template adj = t;
  adj.neighbors[0] = {1};
  CHECK_THROWS_AS(validate_template(adj), std::invalid_argument);
}

TEST_CASE("rest pose and pure translation") {
  const Template t = make_template(TemplateConfig{128, 6, 6, 3});
  PoseState h = PoseState::zero(t.joint_count());
  const Tensor rest = pose(t, h, Tensor{}).vertices;
  for (std::size_t i = 0; i < rest.size(); ++i) CHECK(std::abs(rest[i] - t.rest_vertices[i]) < 1e-15);
  CHECK(pose(t, h, Tensor({128, 3})).vertices == rest);
  h.translation = Vec3(1, 0, 0);
  const Tensor v = pose(t, h, Tensor{}).vertices;
  for (std::size_t i = 0; i < 128; ++i) {
    CHECK(std::abs(v.at(i, 0) - t.rest_vertices.at(i, 0) - 1.0) < 1e-14);
    CHECK(std::abs(v.at(i, 1) - t.rest_vertices.at(i, 1)) < 1e-14);
  }
}

TEST_CASE("a 90 degree bend on a two-bone chain rotates the leaf rigidly") {
  const Template t = two_bone_chain();
  PoseState h = PoseState::zero(2);
  h.joint_rotations[1] = Vec3(0, 0, std::numbers::pi / 2);
  const Tensor v = pose(t, h, Tensor{}).vertices;
  for (std::size_t i = 0; i < 8; ++i) {
    const Vec3 r = row(t.rest_vertices, i);
    // About z through (1, 0, 0): (1 + a, b, c) -> (1 - b, a, c).
    const Vec3 want = r.x() < 1.0 ? r : Vec3(1.0 - r.y(), r.x() - 1.0, r.z());
    CHECK((row(v, i) - want).norm() < 1e-12);
  }
}

TEST_CASE("identical joint transforms are one rigid motion") {
  Rng rng(5);
  const Template t = make_template(TemplateConfig{200, 6, 6, 9});
  for (int k = 0; k < 10; ++k) {
    PoseState h = PoseState::zero(t.joint_count());
    h.joint_rotations[0] = Vec3(rng.normal(), rng.normal(), rng.normal());
    h.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
    const Tensor v = pose(t, h, Tensor{}).vertices;
    const Mat3 r = axis_angle_matrix(h.joint_rotations[0]);
    const Vec3 j = t.joints[0].rest_position;
    for (std::size_t i = 0; i < t.vertex_count(); ++i) {
      const Vec3 want = r * (row(t.rest_vertices, i) - j) + j + h.translation;
      CHECK((row(v, i) - want).norm() <= 1e-10);
    }
  }
}

TEST_CASE("posing is pure and rejects bad input") {
  Rng rng(2);
  const Template t = make_template(TemplateConfig{64, 6, 6, 2});
  const PoseState h = random_pose(rng, t.joint_count(), 0.5);
  CHECK(pose(t, h, Tensor{}).vertices == pose(t, h, Tensor{}).vertices);
  PoseState bad = h;
  bad.translation.x() = std::nan("");
  CHECK_THROWS_AS(pose(t, bad, Tensor{}), std::invalid_argument);
  CHECK_THROWS_AS(pose(t, PoseState::zero(2), Tensor{}), DimensionError);
  CHECK_THROWS_AS(pose(t, h, Tensor({3, 3})), DimensionError);
}

TEST_CASE("pose backward") {
  const Template t = make_template(TemplateConfig{64, 6, 6, 4});
  const std::size_t n = t.vertex_count();
  SUBCASE("zero upstream") {
    Rng rng(1);
    const PoseState h = random_pose(rng, t.joint_count(), 0.5);
    const PosedMesh m = pose(t, h, Tensor{});
    const PoseGrad g = pose_backward(t, h, m.tape, Tensor({n, 3}));
    for (double v : g.pose) CHECK(v == 0.0);
    for (double v : g.offsets.values()) CHECK(v == 0.0);
  }
  SUBCASE("translation gradient sums the upstream") {
    Rng rng(2);
    const PoseState h = random_pose(rng, t.joint_count(), 0.5);
    Tensor up({n, 3});
    for (double& v : up.values()) v = rng.normal();
    const PoseGrad g = pose_backward(t, h, pose(t, h, Tensor{}).tape, up);
    const std::size_t off = 3 * t.joint_count() + kShapeCoefficients;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += up.at(i, c);
      CHECK(g.pose[off + c] == doctest::Approx(s).epsilon(1e-12));
    }
  }
  SUBCASE("central differences over seeds") {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(40 + seed);
      const PoseState h = random_pose(rng, t.joint_count(), 0.7);
      Tensor up({n, 3});
      for (double& v : up.values()) v = rng.normal();
      std::vector<double> x = h.flatten();
      for (std::size_t i = 0; i < 3 * n; ++i) x.push_back(0.01 * rng.normal());
      const std::size_t pw = h.flat_width();
      const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
        const PoseState hp = PoseState::unflatten(p.subspan(0, pw), t.joint_count());
        Tensor offsets({n, 3}, std::vector<double>(p.begin() + static_cast<long>(pw), p.end()));
        const PosedMesh m = pose(t, hp, offsets);
        double s = 0.0;
        for (std::size_t i = 0; i < up.size(); ++i) s += up[i] * m.vertices[i];
        if (!grad.empty()) {
          const PoseGrad g = pose_backward(t, hp, m.tape, up);
          std::copy(g.pose.begin(), g.pose.end(), grad.begin());
          std::copy(g.offsets.values().begin(), g.offsets.values().end(), grad.begin() + static_cast<long>(pw));
        }
        return s;
      };
      CHECK(gradcheck(f, x) < 1e-5);
    }
  }
}

TEST_CASE("laplacian energy") {
  SUBCASE("coincident vertices") {
    const Template t = make_template(TemplateConfig{64, 6, 6, 1});
    CHECK(laplacian_energy(Tensor({64, 3}, 0.7), t.neighbors) < 1e-28);
  }
  SUBCASE("isolated vertices contribute nothing") {
    Tensor v({3, 3});
    v.at(0, 0) = 1.0;
    v.at(2, 1) = 5.0;
    const std::vector<std::vector<int>> nb = {{1}, {0}, {}};
    CHECK(laplacian_energy(v, nb) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("regular grid matches the explicit quadratic form") {
    const int side = 6;
    const std::size_t n = side * side;
    Tensor v({n, 3});
    std::vector<std::vector<int>> nb(n);
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(n, n);
    Rng rng(3);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const int i = y * side + x;
        v.at(i, 0) = x;
        v.at(i, 1) = y;
        v.at(i, 2) = 0.1 * rng.normal();
        auto link = [&](int j) {
          nb[i].push_back(j);
          adj(i, j) = 1.0;
        };
        if (x > 0) link(i - 1);
        if (x + 1 < side) link(i + 1);
        if (y > 0) link(i - side);
        if (y + 1 < side) link(i + side);
      }
    }
    Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t i = 0; i < n; ++i) lap.row(i) -= adj.row(i) / adj.row(i).sum();
    Eigen::MatrixXd pts(n, 3);
    for (std::size_t i = 0; i < n; ++i) pts.row(i) = row(v, i).transpose();
    const double want = (lap * pts).squaredNorm() / static_cast<double>(n);
    CHECK(laplacian_energy(v, nb) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("scaling, translation and gradient") {
    const Template t = make_template(TemplateConfig{96, 6, 6, 8});
    Rng rng(4);
    Tensor v = t.rest_vertices;
    for (double& x : v.values()) x += 0.05 * rng.normal();
    const double e = laplacian_energy(v, t.neighbors);
    Tensor doubled = v;
    doubled *= 2.0;
    CHECK(laplacian_energy(doubled, t.neighbors) == doctest::Approx(4.0 * e).epsilon(1e-12));
    Tensor moved = v;
    for (std::size_t i = 0; i < t.vertex_count(); ++i) moved.at(i, 1) += 3.0;
    CHECK(laplacian_energy(moved, t.neighbors) == doctest::Approx(e).epsilon(1e-10));
    const DifferentiableFn f = [&](std::span<const double> p, std::span<double> grad) {
      const Tensor x({t.vertex_count(), 3}, std::vector<double>(p.begin(), p.end()));
      if (!grad.empty()) {
        const Tensor g = laplacian_energy_backward(x, t.neighbors);
        std::copy(g.values().begin(), g.values().end(), grad.begin());
      }
      return laplacian_energy(x, t.neighbors);
    };
    CHECK(gradcheck(f, v.values()) < 1e-6);
  }
}

TEST_CASE("silhouette") {
  Camera cam;
  cam.fx = cam.fy = 20.0;
  cam.cx = cam.cy = 7.0;
  cam.width = cam.height = 15;
  const Tensor empty = silhouette(GaussianSet{}, cam);
  CHECK(empty.size() == 225);
  for (double v : empty.values()) CHECK(v == 0.0);

  GaussianSet set;
  Gaussian g;
  g.position = Vec3(0, 0, 2);
  g.scale = Vec3::Constant(0.2);
  set.gaussians = {g};
  set.vertex_index = {0};
  CHECK(silhouette(set, cam).at(7, 7) == 1.0);

  Rng rng(9);
  for (int k = 0; k < 5; ++k) {
    Gaussian h;
    h.position = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(2, 3));
    h.opacity = rng.uniform(0.3, 1.0);
    h.scale = Vec3::Constant(rng.uniform(0.05, 0.2));
    set.gaussians.push_back(h);
    set.vertex_index.push_back(k + 1);
  }
  const Tensor alpha = rasterize(set, cam).alpha;
  const Tensor mask = silhouette(set, cam, 0.4);
  std::size_t want = 0, got = 0;
  for (std::size_t p = 0; p < alpha.size(); ++p) {
    want += alpha[p] > 0.4 ? 1 : 0;
    got += mask[p] == 1.0 ? 1 : 0;
    CHECK((mask[p] == 0.0 || mask[p] == 1.0));
  }
  CHECK(got == want);
  CHECK(want > 0);
}

TEST_CASE("template save and load") {
  const Template t = storage_rounded(make_template(TemplateConfig{100, 6, 6, 12}));
  const auto path = std::filesystem::temp_directory_path() / "splatfit_template_test.wgt";
  save_template(path, t);
  const Template u = load_template(path);
  CHECK(u.rest_vertices == t.rest_vertices);
  CHECK(u.skin_weights == t.skin_weights);
  CHECK(u.shape_dirs == t.shape_dirs);
  CHECK(u.neighbors == t.neighbors);
  CHECK(u.mean_edge_length == t.mean_edge_length);
  REQUIRE(u.joint_count() == t.joint_count());
  for (std::size_t k = 0; k < t.joint_count(); ++k) {
    CHECK(u.joints[k].parent == t.joints[k].parent);
    CHECK(u.joints[k].rest_position == t.joints[k].rest_position);
  }
  std::filesystem::remove(path);
}
