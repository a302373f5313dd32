#pragma once

// Independent reference implementations used by the tests. Deliberately
// naive: O(N^2) loops, long-double series, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "pne/geometry.hpp"

namespace oracle {

using pne::PointCloud;
using pne::Vec3;

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.positions.push_back({u(rng), u(rng), u(rng)});
  return c;
}

// Same expression order as the library's documented distance: (dx^2 + dy^2) + dz^2.
inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return (dx * dx + dy * dy) + dz * dz;
}

// k nearest by (distance, index).
inline std::vector<std::vector<std::uint32_t>> knn(const PointCloud& q, const PointCloud& s, std::size_t k) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& p : q.positions) {
    std::vector<std::pair<double, std::uint32_t>> d;
    for (std::uint32_t j = 0; j < s.size(); ++j) d.push_back({sq_dist(s.positions[j], p), j});
    std::sort(d.begin(), d.end());
    std::vector<std::uint32_t> row;
    for (std::size_t i = 0; i < std::min(k, d.size()); ++i) row.push_back(d[i].second);
    out.push_back(row);
  }
  return out;
}

// All support points with squared distance <= r^2, ascending index.
inline std::vector<std::vector<std::uint32_t>> ball(const PointCloud& q, const PointCloud& s, double r) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& p : q.positions) {
    std::vector<std::uint32_t> row;
    for (std::uint32_t j = 0; j < s.size(); ++j)
      if (sq_dist(s.positions[j], p) <= r * r) row.push_back(j);
    out.push_back(row);
  }
  return out;
}

inline std::size_t nonempty_cells(const PointCloud& c, double cell, const Vec3& origin = {0, 0, 0}) {
  std::set<std::tuple<long long, long long, long long>> cells;
  for (const auto& p : c.positions) {
    cells.insert({static_cast<long long>(std::floor((p[0] - origin[0]) / cell)),
                  static_cast<long long>(std::floor((p[1] - origin[1]) / cell)),
                  static_cast<long long>(std::floor((p[2] - origin[2]) / cell))});
  }
  return cells.size();
}

// Phi(x) from the Maclaurin series of erf in long double.
inline double normal_cdf(double x) {
  const long double z = static_cast<long double>(x) / std::sqrt(2.0L);
  long double term = z, sum = z;
  for (int n = 1; n < 200; ++n) {
    term *= -z * z / n;
    sum += term / (2 * n + 1);
  }
  const long double pi = 3.141592653589793238462643383279502884L;
  return static_cast<double>(0.5L + sum / std::sqrt(pi));
}

// exp via its Taylor series in long double.
inline double exp_series(double x) {
  long double term = 1, sum = 1;
  for (int n = 1; n < 80; ++n) {
    term *= static_cast<long double>(x) / n;
    sum += term;
  }
  return static_cast<double>(sum);
}

}  // namespace oracle
