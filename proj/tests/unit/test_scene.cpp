// Copyright Contributors to the splatfit project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>

#include "splatfit/dataset.hpp"
#include "splatfit/random.hpp"
#include "splatfit/scene_synth.hpp"

namespace fs = std::filesystem;
using namespace splatfit;

namespace {

SceneConfig tiny_scene() {
  SceneConfig c;
  c.frames = 12;
  c.width = 24;
  c.height = 20;
  c.vertices = 96;
  c.seed = 4;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("splatfit_scene_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

Tensor random_image(Rng& rng, std::size_t h, std::size_t w) {
  Tensor t({h, w, 3});
  for (double& v : t.values()) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("an empty schedule leaves every frame clean") {
  const fs::path dir = scratch("clean");
  synthesize(tiny_scene(), dir);
  const Dataset d = load_dataset(dir);
  REQUIRE(d.frame_count() == 12);
  for (int l = 1; l <= 12; ++l) {
    const FrameData& f = d.frame(l);
    CHECK_FALSE(f.perturbed());
    CHECK(f.image == f.clean);
    for (double v : f.occluder.values()) CHECK(v == 0.0);
    double ent = 0.0;
    for (std::size_t p = 0; p < f.entity.size(); ++p) {
      ent += f.entity[p];
      CHECK(f.entity[p] + f.background[p] == 1.0);
      CHECK(f.entity[p] == f.silhouette[p]);
    }
    CHECK(ent > 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("test frames avoid perturbations") {
  SceneConfig c;
  c.schedule = {{PerturbationType::occluder, 10, 30, 0.5}, {PerturbationType::illumination, 35, 50, 0.5}};
  const std::vector<int> test = c.test_frames();
  CHECK(test.size() == 6);
  for (int l : test) {
    for (const auto& p : c.schedule) CHECK_FALSE(p.covers(l));
  }
  CHECK(std::is_sorted(test.begin(), test.end()));
  CHECK(std::adjacent_find(test.begin(), test.end()) == test.end());

  SceneConfig bad = c;
  bad.schedule.push_back({PerturbationType::blur, 50, 70, 0.5});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.schedule.back() = {PerturbationType::blur, 5, 6, 1.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("synthesis is bitwise deterministic") {
  SceneConfig c = tiny_scene();
  c.schedule = {{PerturbationType::occluder, 2, 4, 0.6}, {PerturbationType::blur, 6, 7, 0.5},
                {PerturbationType::illumination, 8, 10, 0.4}};
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  synthesize(c, a);
  synthesize(c, b);
  const auto ta = read_tree(a), tb = read_tree(b);
  CHECK(ta.size() > 10);
  CHECK(ta == tb);

  const Dataset d = load_dataset(a);
  const FrameData& occ = d.frame(3);
  CHECK(occ.perturbed());
  CHECK(occ.strength() == 0.6);
  double hidden = 0.0;
  for (std::size_t p = 0; p < occ.entity.size(); ++p) {
    CHECK(occ.entity[p] <= occ.silhouette[p]);
    if (occ.entity[p] > 0.5) CHECK(occ.occluder[p] == 0.0);
    hidden += occ.silhouette[p] - occ.entity[p];
  }
  CHECK(hidden > 0.0);
  CHECK_FALSE(d.frame(9).image == d.frame(9).clean);
  for (int l : d.test) CHECK_FALSE(d.frame(l).perturbed());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("injectors") {
  Rng rng(1);
  const Tensor img = random_image(rng, 16, 18);
  SUBCASE("zero strength is the identity") {
    Tensor x = img, mask({16, 18});
    inject_occluder(x, mask, Vec2(8, 8), 0.0);
    CHECK(x == img);
    for (double v : mask.values()) CHECK(v == 0.0);
    x = img;
    inject_illumination(x, 0.0, 0.5);
    CHECK(x == img);
    x = img;
    inject_blur(x, 0.0, Vec2(1, 0));
    CHECK(x == img);
  }
  SUBCASE("occluder paints a disc") {
    Tensor x = img, mask({16, 18});
    inject_occluder(x, mask, Vec2(9, 8), 1.0);
    CHECK(mask.at(8, 9) == 1.0);
    CHECK(mask.at(0, 0) == 0.0);
    for (std::size_t c = 0; c < 3; ++c) CHECK(x.at(8, 9, c) == kOccluderColor[static_cast<int>(c)]);
    CHECK(x.at(0, 0, 0) == img.at(0, 0, 0));
  }
  SUBCASE("illumination peaks mid-range") {
    Tensor x({4, 4, 3}, 0.4);
    inject_illumination(x, 0.5, 0.5);
    for (double v : x.values()) CHECK(v == doctest::Approx(0.6));
    Tensor y({4, 4, 3}, 0.9);
    inject_illumination(y, 0.8, 0.5);
    for (double v : y.values()) CHECK(v == 1.0);
    Tensor z({4, 4, 3}, 0.4);
    inject_illumination(z, 0.5, 0.0);
    for (double v : z.values()) CHECK(v == doctest::Approx(0.4));
  }
  SUBCASE("blur keeps constant images and ramps across the blur direction") {
    Tensor x({10, 12, 3}, 0.3);
    inject_blur(x, 0.7, Vec2(0.6, 0.8));
    for (double v : x.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
    Tensor r({10, 12, 3});
    for (std::size_t y = 0; y < 10; ++y) {
      for (std::size_t xx = 0; xx < 12; ++xx) {
        for (std::size_t c = 0; c < 3; ++c) r.at(y, xx, c) = 0.05 * static_cast<double>(y);
      }
    }
    const Tensor before = r;
    inject_blur(r, 0.5, Vec2(1, 0));
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == doctest::Approx(before[i]).epsilon(1e-14));
  }
}

TEST_CASE("scene config json round trip") {
  SceneConfig c = tiny_scene();
  c.schedule = {{PerturbationType::pose_extreme, 3, 5, 0.8}};
  c.entities = 2;
  const SceneConfig back = scene_config_from_json(scene_config_to_json(c));
  CHECK(back.frames == c.frames);
  CHECK(back.seed == c.seed);
  CHECK(back.entities == 2);
  REQUIRE(back.schedule.size() == 1);
  CHECK(back.schedule[0].type == PerturbationType::pose_extreme);
  CHECK(back.schedule[0].strength == 0.8);
  CHECK(perturbation_level("low") < perturbation_level("medium"));
  CHECK(perturbation_level("medium") < perturbation_level("high"));
}

TEST_CASE("two-entity scenes carry a mirrored template") {
  SceneConfig c = tiny_scene();
  c.entities = 2;
  const fs::path dir = scratch("two");
  synthesize(c, dir);
  const Dataset d = load_dataset(dir);
  REQUIRE(d.entity_count() == 2);
  const Template m = mirror_template(d.templates[0]);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    CHECK(m.rest_vertices.at(i, 0) == -d.templates[0].rest_vertices.at(i, 0));
  }
  CHECK(d.frame(1).poses.size() == 2);
  fs::remove_all(dir);
}
