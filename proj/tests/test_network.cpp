#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pne/datagen.hpp"
#include "pne/errors.hpp"
#include "pne/gradcheck.hpp"
#include "pne/network.hpp"

using namespace pne;

namespace {

NetworkConfig small_config(Task task) {
  NetworkConfig c;
  c.task = task;
  c.num_classes = 3;
  c.encoder.num_levels = 3;
  c.encoder.widths = {4, 6, 8};
  c.encoder.blocks_per_level = {1, 1, 1};
  c.encoder.initial_cell = 0.15;
  c.encoder.common_dim = 6;
  return c;
}

PointCloud torus(std::size_t n, std::uint64_t seed) {
  PointCloud c = sample_shape(ShapeKind::Torus, n, 0.01, seed);
  std::vector<int> labels(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) labels[i] = static_cast<int>(i % 3);
  c.labels = labels;
  return c;
}

void zero(Matrix& m) {
  for (double& v : m.values()) v = 0.0;
}
void zero(LinearLayer& l) {
  zero(l.weights);
  for (double& v : l.bias) v = 0.0;
}

MetaformerBlock make_block(std::size_t w, double rate, std::uint64_t seed) {
  MetaformerBlock b;
  b.norm1 = init_layer_norm(w);
  b.norm2 = init_layer_norm(w);
  b.mixer = init_conv_layer(Embedding{KernelPointEmbedding{icosahedron_kernel_points(0.2), 0.2, CorrelationKind::Gaussian}},
                            w, w, 8, seed);
  b.fc1 = init_linear(w, 2 * w, seed + 1);
  b.fc2 = init_linear(2 * w, w, seed + 2);
  b.drop_path_rate = rate;
  return b;
}

}  // namespace

TEST_CASE("embedding labels round trip") {
  const auto all = all_embedding_variants();
  CHECK(all.size() == 7);
  for (const auto& s : all) CHECK(parse_embedding_label(s.label()).label() == s.label());
  CHECK(parse_embedding_label("kp-gaussian").correlation == CorrelationKind::Gaussian);
  CHECK(parse_embedding_label("none").kind == EmbeddingKind::Identity);
  CHECK_THROWS_AS(parse_embedding_label("kp-cosine"), ParameterError);
}

TEST_CASE("zeroed residual branches make the block an identity") {
  std::mt19937_64 rng(51);
  PointCloud c = oracle::random_cloud(rng, 30);
  NeighborList nl = knn(c, c, 6);
  MetaformerBlock b = make_block(4, 0.0, 3);
  for (double& v : b.mixer.kernel.values()) v = 0.0;
  zero(b.fc2);
  Matrix x(30, 4);
  std::normal_distribution<double> g;
  for (double& v : x.values()) v = g(rng);
  CHECK(block_forward(b, c, nl, x, true, rng) == x);
  CHECK(block_forward(b, c, nl, x, false, rng) == x);
  CHECK_THROWS_AS(block_forward(b, c, nl, Matrix(30, 5), false, rng), DimensionError);
}

TEST_CASE("drop path is unbiased") {
  // one residual branch at a time: the second branch normalizes the output of
  // the first, so with both active the expectation is not the eval output
  for (int branch = 0; branch < 2; ++branch) {
    std::mt19937_64 rng(52 + branch);
    PointCloud c = oracle::random_cloud(rng, 12);
    NeighborList nl = knn(c, c, 4);
    MetaformerBlock b = make_block(3, 0.5, 9);
    if (branch == 0) zero(b.fc2);
    else for (double& v : b.mixer.kernel.values()) v = 0.0;
    Matrix x(12, 3);
    std::normal_distribution<double> g;
    for (double& v : x.values()) v = g(rng);
    const Matrix eval = block_forward(b, c, nl, x, false, rng);
    CHECK(block_forward(b, c, nl, x, false, rng) == eval);

    const int n = 10000;
    std::vector<double> sum(eval.size(), 0.0), sq(eval.size(), 0.0);
    for (int t = 0; t < n; ++t) {
      const Matrix y = block_forward(b, c, nl, x, true, rng);
      for (std::size_t i = 0; i < y.size(); ++i) sum[i] += y.values()[i], sq[i] += y.values()[i] * y.values()[i];
    }
    for (std::size_t i = 0; i < eval.size(); ++i) {
      const double mean = sum[i] / n;
      const double var = sq[i] / n - mean * mean;
      const double se = std::sqrt(std::max(var, 0.0) / n);
      CHECK(std::abs(mean - eval.values()[i]) <= 3 * se + 1e-12);
    }
  }
}

TEST_CASE("pyramid cell sizes and point counts") {
  EncoderConfig e;
  e.num_levels = 5;
  e.initial_cell = 0.05;
  e.widths = {1, 1, 1, 1, 1};
  e.blocks_per_level = {1, 1, 1, 1, 1};
  const double expect[] = {0.05, 0.1, 0.2, 0.4, 0.8};
  for (std::size_t l = 0; l < 5; ++l) CHECK(e.cell_size(l) == expect[l]);

  std::mt19937_64 rng(53);
  for (int t = 0; t < 10; ++t) {
    PointCloud c = oracle::random_cloud(rng, 300 + 50 * t, -1.0, 1.0);
    Pyramid p = build_pyramid(e, c, true);
    REQUIRE(p.levels.size() == 5);
    for (std::size_t l = 0; l < 5; ++l) {
      CHECK(p.levels[l].size() == oracle::nonempty_cells(c, e.cell_size(l)));
      if (l > 0) CHECK(p.levels[l].size() <= p.levels[l - 1].size());
    }
    CHECK(p.same.size() == 5);
    CHECK(p.down.size() == 4);
    CHECK(p.up.size() == 4);
    CHECK(p.to_first.size() == 5);
  }
  CHECK_THROWS_AS(build_pyramid(e, PointCloud{}, false), DegenerateInputError);
}

TEST_CASE("knn average distance matches brute force") {
  std::mt19937_64 rng(54);
  EncoderConfig e;
  e.num_levels = 1;
  e.widths = {1};
  e.blocks_per_level = {1};
  e.initial_cell = 0.01;
  e.neighborhood.k = 5;
  PointCloud c = oracle::random_cloud(rng, 80);
  double sum = 0;
  std::size_t n = 0;
  const auto lists = oracle::knn(c, c, 5);
  for (std::size_t q = 0; q < lists.size(); ++q)
    for (auto s : lists[q]) sum += std::sqrt(oracle::sq_dist(c.positions[q], c.positions[s])), ++n;
  // cell 0.01 on 80 random points leaves every point in its own cell
  REQUIRE(oracle::nonempty_cells(c, 0.01) == 80);
  CHECK(estimate_knn_average_distance(e, {c})[0] == doctest::Approx(sum / n).epsilon(1e-12));
}

TEST_CASE("global pooling and head") {
  NetworkActivations act;
  act.level_output = {Matrix(3, 2, {1.0, 2.0, 3.0, -1.0, 0.5, 0.5})};
  LinearLayer head = init_linear(2, 3, 1);
  const Matrix a = classify(act, head);

  NetworkActivations dup;
  dup.level_output = {Matrix(6, 2, {1.0, 2.0, 3.0, -1.0, 0.5, 0.5, 1.0, 2.0, 3.0, -1.0, 0.5, 0.5})};
  const Matrix b = classify(dup, head);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-12);

  NetworkActivations one;
  one.level_output = {Matrix(1, 2, {0.3, -0.7})};
  classify(one, head);
  CHECK(one.pooled == one.level_output[0]);

  zero(head.weights);
  head.bias = {0.1, 0.2, 0.3};
  const Matrix z = classify(act, head);
  CHECK(z == Matrix(1, 3, {0.1, 0.2, 0.3}));

  NetworkActivations empty;
  empty.level_output = {Matrix(0, 2)};
  CHECK_THROWS_AS(classify(empty, head), DegenerateInputError);
}

TEST_CASE("decoder shapes and zero-path reduction") {
  const NetworkConfig cfg = small_config(Task::Segmentation);
  NetworkParams p = init_network(cfg, 7);
  const PointCloud c = torus(400, 3);
  std::mt19937_64 rng(1);
  NetworkActivations act;
  const Matrix logits = network_forward(cfg, p, build_pyramid(cfg.encoder, c, true), false, rng, &act);
  CHECK(logits.rows() == act.pyramid.levels[0].size());
  CHECK(logits.cols() == 3);

  for (auto& u : p.decoder->up) for (double& v : u.kernel.values()) v = 0.0;
  for (std::size_t l = 1; l < p.decoder->direct.size(); ++l)
    for (double& v : p.decoder->direct[l].kernel.values()) v = 0.0;
  const Matrix z = network_forward(cfg, p, build_pyramid(cfg.encoder, c, true), false, rng, &act);
  const Matrix expect =
      linear_forward(p.decoder->output, linear_forward(p.decoder->skip[0], act.level_output[0]));
  CHECK(z == expect);
}

TEST_CASE("translation with the grid origin moved is exact") {
  for (Task task : {Task::Classification, Task::Segmentation}) {
    NetworkConfig cfg = small_config(task);
    const NetworkParams p = init_network(cfg, 11);
    const PointCloud c = torus(300, 5);
    PointCloud moved = c;
    const Vec3 d{0.75, -1.5, 3.0};
    for (auto& q : moved.positions) q = q + d;
    std::mt19937_64 rng(1);
    const Matrix a = network_forward(cfg, p, build_pyramid(cfg.encoder, c, true), false, rng);
    NetworkConfig shifted = cfg;
    shifted.encoder.grid_origin = d;
    const Matrix b = network_forward(shifted, p, build_pyramid(shifted.encoder, moved, true), false, rng);
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    CAPTURE(worst);
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("same seed and input give identical activations") {
  NetworkConfig cfg = small_config(Task::Classification);
  cfg.encoder.max_drop_path = 0.3;
  for (const auto& spec : all_embedding_variants()) {
    cfg.encoder.embedding = spec;
    const PointCloud c = torus(250, 8);
    std::mt19937_64 r1(4), r2(4);
    NetworkActivations a1, a2;
    const Matrix l1 = network_forward(cfg, init_network(cfg, 2), build_pyramid(cfg.encoder, c, false), true, r1, &a1);
    const Matrix l2 = network_forward(cfg, init_network(cfg, 2), build_pyramid(cfg.encoder, c, false), true, r2, &a2);
    CAPTURE(spec.label());
    CHECK(l1 == l2);
    for (std::size_t l = 0; l < 3; ++l) CHECK(a1.level_output[l] == a2.level_output[l]);
  }
}

TEST_CASE("drop path rates ramp linearly with depth") {
  NetworkConfig cfg = small_config(Task::Classification);
  cfg.encoder.max_drop_path = 0.5;
  const NetworkParams p = init_network(cfg, 1);
  CHECK(p.blocks[0][0].drop_path_rate == 0.0);
  CHECK(p.blocks[1][0].drop_path_rate == doctest::Approx(0.25));
  CHECK(p.blocks[2][0].drop_path_rate == doctest::Approx(0.5));
}

TEST_CASE("whole-network gradient check") {
  GradcheckOptions o;
  for (Task task : {Task::Classification, Task::Segmentation}) {
    const ComponentResult r = check_network(task, o);
    CAPTURE(r.name);
    CAPTURE(r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-3);
  }
}
