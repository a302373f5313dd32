// Scalar vs AVX2 kernel equivalence. Element-wise kernels must agree bit for
// bit; dot may reassociate, so it is compared against a long-double oracle.

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pne/errors.hpp"
#include "pne/geometry.hpp"
#include "pne/simd.hpp"

using namespace pne;
using simd::Isa;

namespace {

std::vector<double> randv(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels against oracles") {
  const auto& k = simd::kernels(Isa::Scalar);
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 16u, 33u, 100u}) {
    auto a = randv(rng, n), b = randv(rng, n);
    long double ref = 0;
    for (std::size_t i = 0; i < n; ++i) ref += static_cast<long double>(a[i]) * b[i];
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(static_cast<double>(ref)).epsilon(1e-12));
    auto y = b;
    k.axpy(0.37, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == b[i] + 0.37 * a[i]);
  }
}

TEST_CASE("avx2 kernels match scalar") {
  if (!simd::cpu_supports(Isa::Avx2)) {
    MESSAGE("AVX2 unavailable on this machine/build; equivalence not exercised");
    CHECK_THROWS_AS(simd::kernels(Isa::Avx2), ParameterError);
    return;
  }
  const auto& s = simd::kernels(Isa::Scalar);
  const auto& v = simd::kernels(Isa::Avx2);
  CHECK(v.isa == Isa::Avx2);
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = trial % 67;
    auto a = randv(rng, n), b = randv(rng, n);
    const double ds = s.dot(a.data(), b.data(), n), dv = v.dot(a.data(), b.data(), n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
    CHECK(std::abs(ds - dv) <= 1e-14 * mag + 1e-300);

    auto y1 = b, y2 = b;
    s.axpy(-1.7, a.data(), y1.data(), n);
    v.axpy(-1.7, a.data(), y2.data(), n);
    CHECK(y1 == y2);

    // gathered squared distances: identical bits
    PointCloud c = oracle::random_cloud(rng, n + 1, -3.0, 3.0);
    std::vector<std::uint32_t> idx;
    for (std::size_t i = 0; i < n; ++i) idx.push_back(static_cast<std::uint32_t>((i * 7) % (n + 1)));
    const double q[3] = {0.1, -0.4, 2.2};
    std::vector<double> o1(n), o2(n);
    s.gathered_sq_distances(c.packed_xyz(), idx.data(), n, q, o1.data());
    v.gathered_sq_distances(c.packed_xyz(), idx.data(), n, q, o2.data());
    CHECK(o1 == o2);
    for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == oracle::sq_dist(c.positions[idx[i]], {q[0], q[1], q[2]}));
  }
}

TEST_CASE("neighbor search identical under both kernel sets") {
  std::mt19937_64 rng(13);
  const auto before = simd::active().isa;
  for (int t = 0; t < 10; ++t) {
    PointCloud s = oracle::random_cloud(rng, 300), q = oracle::random_cloud(rng, 50);
    simd::set_active(Isa::Scalar);
    const auto k1 = knn(q, s, 12);
    const auto b1 = ball_query(q, s, 0.15);
    if (simd::cpu_supports(Isa::Avx2)) simd::set_active(Isa::Avx2);
    CHECK(knn(q, s, 12) == k1);
    CHECK(ball_query(q, s, 0.15) == b1);
  }
  simd::set_active(before);
}

TEST_CASE("span wrappers") {
  std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(simd::dot(a, b) == 32.0);
  simd::axpy(2.0, a, b);
  CHECK(b == std::vector<double>{6, 9, 12});
  CHECK_THROWS(simd::dot(a, std::vector<double>{1.0}));
}
