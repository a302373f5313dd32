#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pne/errors.hpp"
#include "pne/numerics.hpp"

using namespace pne;

TEST_CASE("activation values") {
  CHECK(activation_forward(ActivationKind::ReLU, -2.0) == 0.0);
  CHECK(activation_forward(ActivationKind::ReLU, 3.0) == 3.0);
  CHECK(activation_forward(ActivationKind::GELU, 0.0) == 0.0);
  CHECK(activation_forward(ActivationKind::GELU, 1.0) == doctest::Approx(oracle::normal_cdf(1.0)).epsilon(1e-12));
  CHECK(std::abs(activation_forward(ActivationKind::GELU, 1.0) - 0.841345) < 1e-6);
  CHECK(activation_forward(ActivationKind::Sin, std::numbers::pi / 2) == 1.0);

  CHECK(activation_derivative(ActivationKind::ReLU, 3.0) == 1.0);
  CHECK(activation_derivative(ActivationKind::ReLU, 0.0) == 0.0);
  CHECK(activation_derivative(ActivationKind::Sin, 0.0) == 1.0);
  CHECK(activation_derivative(ActivationKind::GELU, 0.0) == 0.5);
}

TEST_CASE("normal cdf matches series oracle, including tails") {
  // the series cancels badly in the far tail; |x| <= 4 keeps it exact to ~1e-15
  for (double x : {-4.0, -2.5, -1.0, -0.3, 0.0, 0.7, 1.0, 2.0, 3.5}) {
    const double ref = oracle::normal_cdf(x);
    CHECK(normal_cdf(x) == doctest::Approx(ref).epsilon(1e-12));
  }
  // tabulated tail values
  CHECK(normal_cdf(-5.0) == doctest::Approx(2.866515718791939e-7).epsilon(1e-12));
  CHECK(normal_cdf(-8.0) == doctest::Approx(6.220960574271785e-16).epsilon(1e-12));
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
}

TEST_CASE("activation derivatives match central differences") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const double h = 1e-5;
  for (auto kind : {ActivationKind::ReLU, ActivationKind::GELU, ActivationKind::Sin}) {
    double worst = 0.0;
    for (int i = 0; i < 1000;) {
      const double x = u(rng);
      if (kind == ActivationKind::ReLU && std::abs(x) < 1e-3) continue;
      const double fd = (activation_forward(kind, x + h) - activation_forward(kind, x - h)) / (2 * h);
      worst = std::max(worst, std::abs(fd - activation_derivative(kind, x)));
      ++i;
    }
    CAPTURE(to_string(kind));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("gelu monotone on [-5,5] grid, sin bounded") {
  // GELU has its minimum near -0.75, so monotone non-decreasing holds from there;
  // on the whole interval we check the derivative sign matches the slope.
  double prev = activation_forward(ActivationKind::GELU, -0.75);
  for (double x = -0.74; x <= 5.0; x += 1e-2) {
    const double y = activation_forward(ActivationKind::GELU, x);
    CHECK(y >= prev);
    prev = y;
  }
  for (double x = -5.0; x <= 5.0; x += 1e-2) {
    const double d = activation_derivative(ActivationKind::GELU, x);
    const double slope = activation_forward(ActivationKind::GELU, x + 1e-2) - activation_forward(ActivationKind::GELU, x);
    if (std::abs(d) > 1e-3) CHECK((d > 0) == (slope > 0));
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 10000; ++i) {
    const double y = activation_forward(ActivationKind::Sin, u(rng));
    CHECK((y >= -1.0 && y <= 1.0));
  }
}

TEST_CASE("activation names round trip") {
  for (auto k : {ActivationKind::ReLU, ActivationKind::GELU, ActivationKind::Sin})
    CHECK(parse_activation(to_string(k)) == k);
  CHECK_THROWS_AS(parse_activation("tanh"), ParameterError);
}

TEST_CASE("finite difference jacobian") {
  std::vector<double> x{0.3, -1.2, 2.0};
  const Matrix j = finite_diff_jacobian([](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); },
                                        x, 1e-4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(j(r, c) - (r == c ? 1.0 : 0.0)) < 1e-9);

  std::vector<double> two{2.0};
  const Matrix sq = finite_diff_jacobian([](std::span<const double> v) { return std::vector<double>{v[0] * v[0]}; },
                                         two, 1e-4);
  CHECK(std::abs(sq(0, 0) - 4.0) < 1e-7);

  const Matrix zero = finite_diff_jacobian([](std::span<const double>) { return std::vector<double>{7.0, 7.0}; },
                                           x, 1e-4);
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("matmul, transpose, identity") {
  Matrix m(2, 2, {1.5, -2.0, 0.25, 4.0});
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(Matrix(1, 3, {1, 2, 3}), Matrix(3, 1, {4, 5, 6}))(0, 0) == 32.0);
  CHECK(transpose(transpose(m)) == m);
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("deterministic sum") {
  CHECK(deterministic_sum(std::vector<double>{1, 2, 3}) == 6.0);
  CHECK(deterministic_sum(std::vector<double>{}) == 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1e6);
  std::vector<double> v(10007);
  for (double& x : v) x = g(rng);
  const double a = deterministic_sum(v);
  for (int i = 0; i < 5; ++i) CHECK(deterministic_sum(v) == a);
  // pairwise summation stays close to the long-double sum
  long double ref = 0;
  for (double x : v) ref += x;
  CHECK(std::abs(a - static_cast<double>(ref)) < 1e-6 * std::abs(static_cast<double>(ref)) + 1e-3);
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(1e-9, 0.0) == doctest::Approx(1e-5));
}
