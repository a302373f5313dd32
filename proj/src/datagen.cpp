#include "pne/datagen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pne/errors.hpp"
#include "pne/layers.hpp"

namespace pne {

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
    case ShapeKind::Torus: return "torus";
    case ShapeKind::Plane: return "plane";
  }
  return "?";
}

ShapeKind parse_shape(std::string_view name) {
  for (ShapeKind k : all_shape_kinds())
    if (to_string(k) == name) return k;
  throw ParameterError("unknown shape '" + std::string(name) + "'");
}

std::vector<ShapeKind> all_shape_kinds() {
  return {ShapeKind::Sphere, ShapeKind::Cube, ShapeKind::Torus, ShapeKind::Plane};
}

Rotation identity_rotation() { return {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}}; }

Vec3 rotate(const Rotation& r, const Vec3& p) { return {dot3(r[0], p), dot3(r[1], p), dot3(r[2], p)}; }

Rotation random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double w, x, y, z, len;
  do {
    w = n(rng);
    x = n(rng);
    y = n(rng);
    z = n(rng);
    len = std::sqrt(w * w + x * x + y * y + z * z);
  } while (len < 1e-12);
  w /= len;
  x /= len;
  y /= len;
  z /= len;
  return {Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
          Vec3{2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
          Vec3{2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}};
}

Rotation rotation_about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {Vec3{c, -s, 0}, Vec3{s, c, 0}, Vec3{0, 0, 1}};
}

namespace {

constexpr double kTorusMajor = 1.0;
constexpr double kTorusMinor = 0.3;

Vec3 sample_surface(ShapeKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (kind) {
    case ShapeKind::Sphere: {
      Vec3 v;
      double len;
      do {
        v = {normal(rng), normal(rng), normal(rng)};
        len = norm(v);
      } while (len < 1e-12);
      return (1.0 / len) * v;
    }
    case ShapeKind::Cube: {
      // all six faces have equal area
      const int face = std::uniform_int_distribution<int>(0, 5)(rng);
      const double a = uni(rng), b = uni(rng);
      const double side = face % 2 == 0 ? 1.0 : -1.0;
      switch (face / 2) {
        case 0: return {side, a, b};
        case 1: return {a, side, b};
        default: return {a, b, side};
      }
    }
    case ShapeKind::Torus: {
      // surface element is proportional to R + r cos(theta); reject accordingly
      double theta;
      do {
        theta = two_pi * unit(rng);
      } while (unit(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(theta));
      const double phi = two_pi * unit(rng);
      const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
      return {ring * std::cos(phi), ring * std::sin(phi), kTorusMinor * std::sin(theta)};
    }
    case ShapeKind::Plane:
      return {uni(rng), uni(rng), 0.0};
  }
  return {0, 0, 0};
}

}  // namespace

PointCloud sample_shape(ShapeKind kind, std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n == 0) throw ParameterError("sample_shape needs n >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ParameterError("noise sigma must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  PointCloud cloud;
  cloud.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p = sample_surface(kind, rng);
    if (noise_sigma > 0.0) {
      for (double& c : p) c += noise_sigma * noise(rng);
    }
    cloud.positions.push_back(p);
  }
  return cloud;
}

PointCloud compose_scene(const SceneSpec& spec, std::size_t n_per_shape, std::uint64_t seed) {
  if (spec.parts.empty()) throw ParameterError("scene needs at least one part");
  PointCloud scene;
  std::vector<int> labels;
  for (std::size_t i = 0; i < spec.parts.size(); ++i) {
    const ScenePart& part = spec.parts[i];
    const Vec3& t = part.translation;
    if (!std::isfinite(t[0]) || !std::isfinite(t[1]) || !std::isfinite(t[2]) || !std::isfinite(part.scale)) {
      throw DomainError("scene part " + std::to_string(i) + " has a non-finite pose");
    }
    const PointCloud local = sample_shape(part.kind, n_per_shape, spec.noise_sigma, derive_seed(seed, i));
    for (const Vec3& p : local.positions) {
      scene.positions.push_back(part.translation + part.scale * rotate(part.rotation, p));
      labels.push_back(static_cast<int>(i));
    }
  }
  scene.labels = std::move(labels);
  return scene;
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.rotate = c.mirror = c.scale = c.jitter = false;
  return c;
}

void validate(const AugmentationConfig& cfg) {
  if (!(cfg.mirror_prob >= 0.0 && cfg.mirror_prob <= 1.0)) throw ParameterError("mirror_prob must lie in [0, 1]");
  if (!(cfg.scale_lo <= cfg.scale_hi) || !(cfg.scale_lo > 0.0)) {
    throw ParameterError("scale range must satisfy 0 < lo <= hi");
  }
  if (!(cfg.jitter_sigma >= 0.0)) throw ParameterError("jitter sigma must be >= 0");
}

PointCloud augment(const PointCloud& cloud, const AugmentationConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  PointCloud out = cloud;
  std::mt19937_64 rng(seed);
  if (cfg.rotate) {
    const Rotation r = cfg.rotation == RotationMode::Full
                           ? random_rotation(rng)
                           : rotation_about_z(std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng));
    for (Vec3& p : out.positions) p = rotate(r, p);
  }
  if (cfg.mirror && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.mirror_prob) {
    for (Vec3& p : out.positions) p[0] = -p[0];
  }
  if (cfg.scale) {
    const double s = std::uniform_real_distribution<double>(cfg.scale_lo, cfg.scale_hi)(rng);
    for (Vec3& p : out.positions) p = s * p;
  }
  if (cfg.jitter && cfg.jitter_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, cfg.jitter_sigma);
    for (Vec3& p : out.positions)
      for (double& c : p) c += n(rng);
  }
  return out;
}

namespace {

PointCloud classification_sample(const ClassificationDataConfig& cfg, ShapeKind kind, std::uint64_t seed) {
  PointCloud cloud = sample_shape(kind, cfg.points, cfg.noise_sigma, derive_seed(seed, 0));
  std::mt19937_64 rng(derive_seed(seed, 1));
  const Rotation r = cfg.random_rotation ? random_rotation(rng) : identity_rotation();
  const double s = std::uniform_real_distribution<double>(cfg.scale_lo, cfg.scale_hi)(rng);
  for (Vec3& p : cloud.positions) p = s * rotate(r, p);
  return cloud;
}

Dataset classification_split(const ClassificationDataConfig& cfg, std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  const auto kinds = all_shape_kinds();
  d.num_classes = kinds.size();
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < kinds.size(); ++c) {
      d.clouds.push_back(classification_sample(cfg, kinds[c], derive_seed(seed, counter++)));
      d.labels.push_back(static_cast<int>(c));
    }
  }
  return d;
}

}  // namespace

DatasetSplit make_classification_dataset(const ClassificationDataConfig& cfg, std::uint64_t seed) {
  if (cfg.points == 0) throw ParameterError("classification clouds need >= 1 point");
  if (!(cfg.scale_lo > 0.0 && cfg.scale_lo <= cfg.scale_hi)) throw ParameterError("bad object scale range");
  return {classification_split(cfg, cfg.train_per_class, derive_seed(seed, 100)),
          classification_split(cfg, cfg.test_per_class, derive_seed(seed, 200))};
}

SceneSpec segmentation_scene(const SegmentationDataConfig& cfg, std::uint64_t seed, std::size_t index) {
  if (cfg.shapes_per_scene == 0) throw ParameterError("scenes need >= 1 shape");
  std::mt19937_64 rng(derive_seed(seed, index));
  const auto kinds = all_shape_kinds();
  std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
  std::uniform_real_distribution<double> scale(0.6, 0.9);
  SceneSpec spec;
  spec.noise_sigma = cfg.noise_sigma;
  for (std::size_t i = 0; i < cfg.shapes_per_scene; ++i) {
    ScenePart part;
    part.kind = kinds[pick(rng)];
    part.rotation = random_rotation(rng);
    part.scale = scale(rng);
    part.translation = {cfg.spacing * static_cast<double>(i), 0.0, 0.0};
    spec.parts.push_back(part);
  }
  return spec;
}

namespace {

Dataset segmentation_split(const SegmentationDataConfig& cfg, std::size_t scenes, std::uint64_t seed) {
  Dataset d;
  d.num_classes = all_shape_kinds().size();
  for (std::size_t i = 0; i < scenes; ++i) {
    const SceneSpec spec = segmentation_scene(cfg, seed, i);
    PointCloud cloud = compose_scene(spec, cfg.points_per_shape, derive_seed(seed ^ 0x5ce4e5ULL, i));
    for (int& l : *cloud.labels) l = static_cast<int>(spec.parts[static_cast<std::size_t>(l)].kind);
    d.clouds.push_back(std::move(cloud));
  }
  return d;
}

}  // namespace

DatasetSplit make_segmentation_dataset(const SegmentationDataConfig& cfg, std::uint64_t seed) {
  if (cfg.points_per_shape == 0) throw ParameterError("scene parts need >= 1 point");
  return {segmentation_split(cfg, cfg.train_scenes, derive_seed(seed, 300)),
          segmentation_split(cfg, cfg.test_scenes, derive_seed(seed, 400))};
}

}  // namespace pne
