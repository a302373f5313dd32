#include <algorithm>
#include <cmath>
#include <map>

#include "doctest.h"
#include "pne/datagen.hpp"
#include "pne/errors.hpp"
#include "pne/layers.hpp"

using namespace pne;

namespace {

double dist(const Vec3& a, const Vec3& b) { return norm(a - b); }

std::vector<double> pairwise(const PointCloud& c) {
  std::vector<double> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = i + 1; j < c.size(); ++j) out.push_back(dist(c.positions[i], c.positions[j]));
  return out;
}

}  // namespace

TEST_CASE("shape surfaces") {
  for (const Vec3& p : sample_shape(ShapeKind::Sphere, 500, 0.0, 1).positions) CHECK(std::abs(norm(p) - 1.0) < 1e-12);
  for (const Vec3& p : sample_shape(ShapeKind::Plane, 500, 0.0, 1).positions) {
    CHECK(p[2] == 0.0);
    CHECK(std::abs(p[0]) <= 1.0);
  }
  for (const Vec3& p : sample_shape(ShapeKind::Torus, 500, 0.0, 1).positions) {
    const double rho = std::hypot(p[0], p[1]) - 1.0;
    CHECK(std::abs(rho * rho + p[2] * p[2] - 0.09) < 1e-10);
  }
  for (const Vec3& p : sample_shape(ShapeKind::Cube, 500, 0.0, 1).positions) {
    const double m = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2])});
    CHECK(std::abs(m - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(sample_shape(ShapeKind::Sphere, 0, 0.0, 1), ParameterError);
  CHECK(sample_shape(ShapeKind::Cube, 64, 0.01, 9).positions == sample_shape(ShapeKind::Cube, 64, 0.01, 9).positions);
  CHECK(sample_shape(ShapeKind::Cube, 64, 0.01, 9).positions != sample_shape(ShapeKind::Cube, 64, 0.01, 10).positions);
  for (auto k : all_shape_kinds()) CHECK(parse_shape(to_string(k)) == k);
}

TEST_CASE("torus area uniformity") {
  // the outer half of the tube (rho > 0) carries more area than the inner half:
  // ratio of areas = (pi R + 2r) / (pi R - 2r)
  const auto c = sample_shape(ShapeKind::Torus, 40000, 0.0, 3);
  std::size_t outer = 0;
  for (const Vec3& p : c.positions) outer += std::hypot(p[0], p[1]) > 1.0;
  const double pi = 3.14159265358979323846;
  const double expect = (pi + 0.6) / (2 * pi);
  CHECK(std::abs(static_cast<double>(outer) / 40000.0 - expect) < 0.01);
}

TEST_CASE("scene composition labels") {
  SceneSpec one;
  one.parts.push_back({ShapeKind::Torus});
  PointCloud s = compose_scene(one, 50, 1);
  CHECK(s.size() == 50);
  for (int l : *s.labels) CHECK(l == 0);

  SceneSpec two;
  ScenePart a{ShapeKind::Sphere}, b{ShapeKind::Sphere};
  a.translation = {-3.0, 0.0, 0.0};
  b.translation = {3.0, 0.0, 0.0};
  b.scale = 0.5;
  two.parts = {a, b};
  two.noise_sigma = 0.01;
  PointCloud t = compose_scene(two, 80, 2);
  CHECK(t.size() == 160);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const int nearer = dist(t.positions[i], a.translation) < dist(t.positions[i], b.translation) ? 0 : 1;
    CHECK(t.labels->at(i) == nearer);
  }
  CHECK_THROWS(compose_scene(SceneSpec{}, 10, 1));
}

TEST_CASE("augmentation") {
  PointCloud c = sample_shape(ShapeKind::Cube, 60, 0.0, 4);
  c.labels = std::vector<int>(60, 2);
  CHECK(augment(c, AugmentationConfig::disabled(), 1).positions == c.positions);

  AugmentationConfig iso = AugmentationConfig::disabled();
  iso.rotate = true;
  iso.mirror = true;
  iso.mirror_prob = 1.0;
  const auto d0 = pairwise(c);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud r = augment(c, iso, seed);
    const auto d1 = pairwise(r);
    for (std::size_t i = 0; i < d0.size(); ++i) CHECK(std::abs(d0[i] - d1[i]) < 1e-12);
    CHECK(*r.labels == *c.labels);
  }

  AugmentationConfig sc = AugmentationConfig::disabled();
  sc.scale = true;
  sc.scale_lo = sc.scale_hi = 1.7;
  const auto d2 = pairwise(augment(c, sc, 3));
  for (std::size_t i = 0; i < d0.size(); ++i) CHECK(std::abs(d2[i] - 1.7 * d0[i]) < 1e-12);

  // up-axis rotation keeps z
  AugmentationConfig up = AugmentationConfig::disabled();
  up.rotate = true;
  up.rotation = RotationMode::UpAxis;
  const PointCloud u = augment(c, up, 5);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(u.positions[i][2] == doctest::Approx(c.positions[i][2]).epsilon(1e-14));

  // mirror with probability 1 flips x
  AugmentationConfig m = AugmentationConfig::disabled();
  m.mirror = true;
  m.mirror_prob = 1.0;
  const PointCloud f = augment(c, m, 6);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(f.positions[i][0] == -c.positions[i][0]);

  AugmentationConfig full;
  CHECK(augment(c, full, 8).positions == augment(c, full, 8).positions);

  AugmentationConfig bad;
  bad.mirror_prob = 1.5;
  CHECK_THROWS_AS(validate(bad), ParameterError);
  bad = AugmentationConfig{};
  bad.scale_lo = 2.0;
  CHECK_THROWS_AS(validate(bad), ParameterError);
  bad = AugmentationConfig{};
  bad.jitter_sigma = -1.0;
  CHECK_THROWS_AS(validate(bad), ParameterError);
}

TEST_CASE("random rotations are proper and uniform enough") {
  std::mt19937_64 rng(7);
  Vec3 mean{0, 0, 0};
  for (int i = 0; i < 4000; ++i) {
    const Rotation r = random_rotation(rng);
    const Vec3 e = rotate(r, {0.0, 0.0, 1.0});
    CHECK(std::abs(norm(e) - 1.0) < 1e-12);
    mean = mean + e;
  }
  // image of a fixed axis is uniform on the sphere: mean near zero
  for (int a = 0; a < 3; ++a) CHECK(std::abs(mean[a] / 4000) < 0.05);
}

TEST_CASE("classification dataset balance and determinism") {
  ClassificationDataConfig cfg;
  cfg.train_per_class = 10;
  cfg.test_per_class = 3;
  cfg.points = 64;
  const auto a = make_classification_dataset(cfg, 5);
  const auto b = make_classification_dataset(cfg, 5);
  CHECK(a.train.size() == 40);
  CHECK(a.test.size() == 12);
  CHECK(a.train.num_classes == 4);
  std::map<int, int> counts;
  for (int l : a.train.labels) ++counts[l];
  for (auto [k, v] : counts) CHECK(v == 10);
  // interleaved, so every prefix of 4n is balanced
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.train.labels[i] == static_cast<int>(i % 4));
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train.clouds[i].positions == b.train.clouds[i].positions);
    CHECK(a.train.clouds[i].size() == 64);
  }
  const auto c = make_classification_dataset(cfg, 6);
  CHECK(c.train.clouds[0].positions != a.train.clouds[0].positions);
  // test split differs from train
  CHECK(a.test.clouds[0].positions != a.train.clouds[0].positions);
}

TEST_CASE("segmentation labels are reproducible from the scene spec") {
  SegmentationDataConfig cfg;
  cfg.train_scenes = 4;
  cfg.test_scenes = 2;
  cfg.points_per_shape = 40;
  const auto d = make_segmentation_dataset(cfg, 11);
  CHECK(d.train.size() == 4);
  CHECK(d.train.per_point());
  CHECK(d.train.num_classes == 4);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const PointCloud& c = d.train.clouds[i];
    CHECK(c.size() == 3 * 40);
    // train split scenes are drawn from stream 300 of the dataset seed
    const SceneSpec spec = segmentation_scene(cfg, derive_seed(11, 300), i);
    for (std::size_t p = 0; p < c.size(); ++p) {
      // parts sit on the x axis, spacing beyond their extent
      const auto part = static_cast<std::size_t>(std::lround(c.positions[p][0] / cfg.spacing));
      REQUIRE(part < spec.parts.size());
      CHECK(c.labels->at(p) == static_cast<int>(spec.parts[part].kind));
    }
  }
  const auto e = make_segmentation_dataset(cfg, 11);
  for (std::size_t i = 0; i < 4; ++i) CHECK(*e.train.clouds[i].labels == *d.train.clouds[i].labels);
}
