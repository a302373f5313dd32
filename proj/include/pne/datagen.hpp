#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "pne/geometry.hpp"

namespace pne {

enum class ShapeKind { Sphere, Cube, Torus, Plane };

std::string_view to_string(ShapeKind kind);
ShapeKind parse_shape(std::string_view name);
std::vector<ShapeKind> all_shape_kinds();

// Row-major 3x3 rotation.
using Rotation = std::array<Vec3, 3>;

Rotation identity_rotation();
Vec3 rotate(const Rotation& r, const Vec3& p);
// Haar-uniform over SO(3) (unit quaternion from four normals).
Rotation random_rotation(std::mt19937_64& rng);
Rotation rotation_about_z(double angle);

// n points on the unit-scale surface, area-uniform, plus N(0, noise^2)
// per coordinate.
//   sphere: radius 1
//   cube:   surface of [-1, 1]^3
//   torus:  R = 1, r = 0.3, axis z
//   plane:  [-1, 1]^2 at z = 0
PointCloud sample_shape(ShapeKind kind, std::size_t n, double noise_sigma, std::uint64_t seed);

struct ScenePart {
  ShapeKind kind = ShapeKind::Sphere;
  Rotation rotation = identity_rotation();
  Vec3 translation{0.0, 0.0, 0.0};
  double scale = 1.0;
};

struct SceneSpec {
  std::vector<ScenePart> parts;
  double noise_sigma = 0.0;
};

// Union of the posed parts; label = index of the generating part.
PointCloud compose_scene(const SceneSpec& spec, std::size_t n_per_shape, std::uint64_t seed);

enum class RotationMode { Full, UpAxis };

struct AugmentationConfig {
  bool rotate = true;
  RotationMode rotation = RotationMode::Full;
  bool mirror = true;
  double mirror_prob = 0.5;
  bool scale = true;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  bool jitter = true;
  double jitter_sigma = 0.005;

  static AugmentationConfig disabled();
  bool any() const { return rotate || mirror || scale || jitter; }
};

void validate(const AugmentationConfig& cfg);

// rotation -> mirror(x) -> scale -> jitter. Labels and features are kept.
PointCloud augment(const PointCloud& cloud, const AugmentationConfig& cfg, std::uint64_t seed);

// A labelled collection of clouds. Classification sets have one label per
// cloud in `labels`; segmentation sets carry per-point labels inside each cloud.
struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  bool per_point() const { return labels.empty(); }
  std::size_t size() const { return clouds.size(); }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

struct ClassificationDataConfig {
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 50;
  std::size_t points = 256;
  double noise_sigma = 0.01;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  bool random_rotation = true;
};

// One object per cloud, class = ShapeKind. Samples are interleaved by class
// so any prefix of n * 4 clouds is balanced.
DatasetSplit make_classification_dataset(const ClassificationDataConfig& cfg, std::uint64_t seed);

struct SegmentationDataConfig {
  std::size_t train_scenes = 64;
  std::size_t test_scenes = 16;
  std::size_t shapes_per_scene = 3;
  std::size_t points_per_shape = 256;
  double noise_sigma = 0.01;
  double spacing = 3.5;  // distance between neighbouring part centers
};

// Scenes of randomly posed parts laid out along x; per-point labels are the
// ShapeKind of the generating part.
DatasetSplit make_segmentation_dataset(const SegmentationDataConfig& cfg, std::uint64_t seed);

// The scene spec used for scene i of a segmentation split (exposed so label
// consistency can be rechecked).
SceneSpec segmentation_scene(const SegmentationDataConfig& cfg, std::uint64_t seed, std::size_t index);

}  // namespace pne
