#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pne/errors.hpp"
#include "pne/layers.hpp"
#include "pne/pointconv.hpp"

using namespace pne;

namespace {

ConvLayer hand_layer(Normalization n) {
  ConvLayer l;
  l.embedding = Embedding{IdentityEmbedding{}};
  l.projection = Matrix::identity(3);
  l.kernel = Tensor3(1, 1, 3);
  l.kernel(0, 0, 0) = 0.5;
  l.normalize = n;
  return l;
}

Embedding make(const std::string& which, std::uint64_t seed) {
  if (which == "box" || which == "triangular" || which == "gaussian")
    return {KernelPointEmbedding{icosahedron_kernel_points(0.3), 0.3, parse_correlation(which)}};
  if (which == "none") return {IdentityEmbedding{}};
  return {init_mlp_embedding(8, 0.5, parse_activation(which), seed)};
}

const std::vector<std::string> kAll{"box", "triangular", "gaussian", "relu", "gelu", "sin", "none"};

Matrix randm(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (double& v : m.values()) v = g(rng);
  return m;
}

}  // namespace

TEST_CASE("hand evaluation of the convolution sum") {
  PointCloud q, s;
  q.positions = {{0, 0, 0}};
  s.positions = {{1, 0, 0}};
  NeighborList nl;
  nl.append(std::vector<std::uint32_t>{0});
  Matrix f(1, 1, {2.0});
  ConvLayer l = hand_layer(Normalization::Sum);
  CHECK(conv_forward(l, q, s, nl, f)(0, 0) == 1.0);

  // d_kernel[0,0,:] = upstream * feature * (P e)
  Matrix up(1, 1, {3.0});
  auto g = conv_backward(l, q, s, nl, f, up);
  CHECK(g.d_kernel(0, 0, 0) == 6.0);
  CHECK(g.d_kernel(0, 0, 1) == 0.0);
  CHECK(g.d_features(0, 0) == 1.5);

  // zero features -> bias
  l.bias = std::vector<double>{0.25};
  CHECK(conv_forward(l, q, s, nl, Matrix(1, 1))(0, 0) == 0.25);

  // duplicated neighbor (two identical support points) under Mean leaves the output unchanged
  ConvLayer m = hand_layer(Normalization::Mean);
  PointCloud s2;
  s2.positions = {{1, 0, 0}, {1, 0, 0}};
  NeighborList nl2;
  nl2.append(std::vector<std::uint32_t>{0, 1});
  CHECK(conv_forward(m, q, s2, nl2, Matrix(2, 1, {2.0, 2.0}))(0, 0) == conv_forward(m, q, s, nl, f)(0, 0));

  // upstream zero -> zero gradients
  auto z = conv_backward(m, q, s2, nl2, Matrix(2, 1, {2.0, 2.0}), Matrix(1, 1));
  for (double v : z.d_kernel.values()) CHECK(v == 0.0);
  for (double v : z.d_projection.values()) CHECK(v == 0.0);
  for (double v : z.d_features.values()) CHECK(v == 0.0);
}

TEST_CASE("unreferenced support rows get zero feature gradient") {
  std::mt19937_64 rng(41);
  PointCloud s = oracle::random_cloud(rng, 10), q = oracle::random_cloud(rng, 4);
  NeighborList nl;
  for (int i = 0; i < 4; ++i) nl.append(std::vector<std::uint32_t>{0, 1, 2});
  ConvLayer l = init_conv_layer(make("gaussian", 1), 2, 3, 16, 5);
  auto g = conv_backward(l, q, s, nl, randm(rng, 10, 2), randm(rng, 4, 3));
  for (std::size_t r = 3; r < 10; ++r)
    for (double v : g.d_features.row(r)) CHECK(v == 0.0);
}

TEST_CASE("neighbor permutation invariance and feature linearity") {
  std::mt19937_64 rng(42);
  for (const auto& w : kAll) {
    for (int t = 0; t < 20; ++t) {
      PointCloud s = oracle::random_cloud(rng, 30), q = oracle::random_cloud(rng, 10);
      NeighborList nl = knn(q, s, 8);
      NeighborList shuffled;
      for (std::size_t i = 0; i < nl.num_queries(); ++i) {
        auto r = nl.neighbors(i);
        std::vector<std::uint32_t> v(r.begin(), r.end());
        std::shuffle(v.begin(), v.end(), rng);
        shuffled.append(v);
      }
      ConvLayer l = init_conv_layer(make(w, t), 3, 4, 16, t, true);
      const Matrix f1 = randm(rng, 30, 3), f2 = randm(rng, 30, 3);
      const Matrix a = conv_forward(l, q, s, nl, f1), b = conv_forward(l, q, s, shuffled, f1);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-10);

      // linearity holds for the bias-free map
      l.bias.reset();
      const double alpha = 0.7, beta = -1.3;
      Matrix mix(30, 3);
      for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = alpha * f1.values()[i] + beta * f2.values()[i];
      const Matrix y = conv_forward(l, q, s, nl, mix), y1 = conv_forward(l, q, s, nl, f1),
                   y2 = conv_forward(l, q, s, nl, f2);
      for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs(y.values()[i] - (alpha * y1.values()[i] + beta * y2.values()[i])) < 1e-10);
    }
  }
}

TEST_CASE("parameter counts differ only by the projection") {
  const std::size_t in = 3, out = 5, ec = 16;
  for (const auto& w : kAll) {
    ConvLayer l = init_conv_layer(make(w, 1), in, out, ec, 1);
    const Embedding& e = l.embedding;
    const std::size_t mlp_params = e.has_parameters() ? e.raw_dim() * 4 : 0;
    CAPTURE(w);
    CHECK(l.parameter_count() == in * out * ec + e.raw_dim() * ec + mlp_params);
  }
}

TEST_CASE("init is seeded and variance preserving") {
  ConvLayer a = init_conv_layer(make("gaussian", 1), 4, 4, 16, 77);
  ConvLayer b = init_conv_layer(make("gaussian", 1), 4, 4, 16, 77);
  CHECK(a.kernel == b.kernel);
  CHECK(a.projection == b.projection);
  const ConvLayer with_bias = init_conv_layer(make("gaussian", 1), 4, 4, 16, 77, true);
  REQUIRE(with_bias.bias->size() == 4);
  for (double v : *with_bias.bias) CHECK(v == 0.0);

  // Monte Carlo on unit-scale random data: Identity embedding of N(0,1)
  // offsets, one neighbor, Sum. Truncating the kernel at 2 sigma gives an
  // expected ratio of about 0.774.
  std::mt19937_64 rng(43);
  std::normal_distribution<double> g;
  double in_var = 0, out_var = 0;
  std::size_t n_in = 0, n_out = 0;
  for (int t = 0; t < 100; ++t) {
    PointCloud s = oracle::random_cloud(rng, 40), q;
    for (std::size_t i = 0; i < 40; ++i) q.positions.push_back(s.positions[i] + Vec3{g(rng), g(rng), g(rng)});
    NeighborList nl;
    for (std::uint32_t i = 0; i < 40; ++i) nl.append(std::vector<std::uint32_t>{i});
    ConvLayer l = init_conv_layer(Embedding{IdentityEmbedding{}}, 8, 8, 16, 1000 + t, false, Normalization::Sum);
    const Matrix f = randm(rng, 40, 8);
    const Matrix y = conv_forward(l, q, s, nl, f);
    for (double v : f.values()) in_var += v * v, ++n_in;
    for (double v : y.values()) out_var += v * v, ++n_out;
  }
  const double ratio = (out_var / n_out) / (in_var / n_in);
  CAPTURE(ratio);
  CHECK(ratio > 0.25);
  CHECK(ratio < 4.0);
  CHECK(std::abs(ratio - 0.774) < 0.15);
}

TEST_CASE("backward with a cache equals backward without") {
  std::mt19937_64 rng(44);
  PointCloud s = oracle::random_cloud(rng, 25), q = oracle::random_cloud(rng, 9);
  NeighborList nl = knn(q, s, 6);
  ConvLayer l = init_conv_layer(make("gelu", 2), 2, 3, 16, 3, true);
  const Matrix f = randm(rng, 25, 2), up = randm(rng, 9, 3);
  ConvCache cache;
  conv_forward(l, q, s, nl, f, &cache);
  auto a = conv_backward(l, q, s, nl, f, up, &cache);
  auto b = conv_backward(l, q, s, nl, f, up);
  CHECK(a.d_kernel == b.d_kernel);
  CHECK(a.d_projection == b.d_projection);
  CHECK(a.d_features == b.d_features);
  CHECK(a.d_query_positions == b.d_query_positions);

  ConvBackwardOptions no_pos;
  no_pos.position_gradients = false;
  auto c = conv_backward(l, q, s, nl, f, up, &cache, no_pos);
  CHECK(c.d_query_positions.empty());
  CHECK(c.d_kernel == a.d_kernel);
}

TEST_CASE("empty neighborhoods and shape errors") {
  PointCloud q, s;
  q.positions = {{0, 0, 0}};
  s.positions = {{5, 0, 0}};
  NeighborList nl;
  nl.append(std::vector<std::uint32_t>{});
  ConvLayer l = init_conv_layer(make("gaussian", 1), 1, 2, 4, 1, true);
  (*l.bias)[1] = 0.5;
  const Matrix y = conv_forward(l, q, s, nl, Matrix(1, 1, {1.0}));
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.5);
  CHECK_THROWS_AS(conv_forward(l, q, s, nl, Matrix(1, 2)), DimensionError);
  NeighborList bad;
  bad.append(std::vector<std::uint32_t>{3});
  CHECK_THROWS_AS(conv_forward(l, q, s, bad, Matrix(1, 1)), IndexError);
}
