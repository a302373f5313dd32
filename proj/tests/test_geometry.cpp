#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pne/errors.hpp"
#include "pne/geometry.hpp"

using namespace pne;

namespace {

std::vector<std::vector<std::uint32_t>> rows_of(const NeighborList& nl) {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t q = 0; q < nl.num_queries(); ++q) {
    auto r = nl.neighbors(q);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

PointCloud line_cloud(std::initializer_list<double> xs) {
  PointCloud c;
  for (double x : xs) c.positions.push_back({x, 0.0, 0.0});
  return c;
}

}  // namespace

TEST_CASE("grid index cells") {
  PointCloud one;
  one.positions = {{0.2, 0.2, 0.2}};
  GridIndex g = build_grid_index(one, 1.0);
  CHECK(g.num_cells() == 1);
  REQUIRE(g.find({0, 0, 0}) != nullptr);
  CHECK(*g.find({0, 0, 0}) == std::vector<std::uint32_t>{0});

  PointCloud two = line_cloud({0.9, 1.1});
  GridIndex g2 = build_grid_index(two, 1.0);
  CHECK(g2.num_cells() == 2);
  CHECK(g2.find({0, 0, 0}) != nullptr);
  CHECK(g2.find({1, 0, 0}) != nullptr);
  CHECK(g2.cell_of({-0.1, 0, 0}) == CellKey{-1, 0, 0});

  CHECK_THROWS_AS(build_grid_index(PointCloud{}, 1.0), ParameterError);
  CHECK_THROWS_AS(build_grid_index(one, 0.0), ParameterError);
}

TEST_CASE("cell average subsample") {
  PointCloud c;
  c.positions = {{0.2, 0.2, 0.0}, {0.4, 0.6, 0.0}};
  auto r = cell_average_subsample(c, 1.0);
  REQUIRE(r.cloud.size() == 1);
  CHECK(r.cloud.positions[0][0] == doctest::Approx(0.3));
  CHECK(r.cloud.positions[0][1] == doctest::Approx(0.4));
  CHECK(r.cloud.positions[0][2] == 0.0);
  CHECK(r.cloud.cell_size == 1.0);

  PointCloud l;
  l.positions = {{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}, {0.3, 0.3, 0.3}};
  l.labels = std::vector<int>{0, 0, 1};
  CHECK(cell_average_subsample(l, 1.0).cloud.labels->at(0) == 0);
  l.labels = std::vector<int>{1, 0, 1};
  CHECK(cell_average_subsample(l, 1.0).cloud.labels->at(0) == 1);
  l.labels = std::vector<int>{2, 1, 0};  // three-way tie -> smallest id
  CHECK(cell_average_subsample(l, 1.0).cloud.labels->at(0) == 0);

  // singleton cells reproduce the input up to ordering
  PointCloud s = line_cloud({2.5, 0.5, 1.5});
  auto rs = cell_average_subsample(s, 1.0);
  std::vector<double> xs;
  for (auto& p : rs.cloud.positions) xs.push_back(p[0]);
  CHECK(xs == std::vector<double>{0.5, 1.5, 2.5});
}

TEST_CASE("subsample properties on random clouds") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 50; ++t) {
    PointCloud c = oracle::random_cloud(rng, 1 + t * 7, -1.0, 1.0);
    c.features = Matrix(c.size(), 2);
    for (std::size_t i = 0; i < c.size(); ++i) c.features->row(i)[0] = static_cast<double>(i);
    const double cell = 0.1 + 0.05 * (t % 5);
    auto r = cell_average_subsample(c, cell);
    CHECK(r.cloud.size() == oracle::nonempty_cells(c, cell));
    // parent map partitions the input
    std::vector<int> seen(c.size(), 0);
    for (std::size_t o = 0; o < r.parent_map.size(); ++o) {
      CHECK(!r.parent_map[o].empty());
      double mean = 0;
      for (auto i : r.parent_map[o]) {
        ++seen[i];
        mean += static_cast<double>(i);
      }
      mean /= static_cast<double>(r.parent_map[o].size());
      CHECK(r.cloud.features->row(o)[0] == doctest::Approx(mean));
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));

    // cell larger than the bounding box (origin chosen so nothing straddles) -> global centroid
    auto g = cell_average_subsample(c, 10.0, {-5.0, -5.0, -5.0});
    REQUIRE(g.cloud.size() == 1);
    Vec3 centroid{0, 0, 0};
    for (auto& p : c.positions) centroid = centroid + p;
    for (int a = 0; a < 3; ++a) CHECK(g.cloud.positions[0][a] == doctest::Approx(centroid[a] / c.size()));
  }
}

TEST_CASE("knn hand cases") {
  PointCloud s = line_cloud({0.0, 1.0, 3.0});
  PointCloud q = line_cloud({0.0});
  auto r = knn(q, s, 2);
  CHECK(rows_of(r)[0] == std::vector<std::uint32_t>{0, 1});
  CHECK(rows_of(knn(q, s, 10))[0] == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(rows_of(knn(s, s, 1)) == std::vector<std::vector<std::uint32_t>>{{0}, {1}, {2}});
  // equidistant ties resolve to the smaller index
  PointCloud t = line_cloud({-1.0, 1.0});
  CHECK(rows_of(knn(q, t, 1))[0] == std::vector<std::uint32_t>{0});
  CHECK_THROWS_AS(knn(q, s, 0), ParameterError);
}

TEST_CASE("ball query hand cases") {
  PointCloud s = line_cloud({0.0, 1.0, 3.0});
  PointCloud q = line_cloud({0.0});
  CHECK(rows_of(ball_query(q, s, 1.5))[0] == std::vector<std::uint32_t>{0, 1});
  CHECK(rows_of(ball_query(line_cloud({10.0}), s, 0.5))[0].empty());
  CHECK(rows_of(ball_query(q, s, 1.0))[0] == std::vector<std::uint32_t>{0, 1});  // inclusive
  CHECK(rows_of(ball_query(q, s, 5.0, 2))[0] == std::vector<std::uint32_t>{0, 1});
  CHECK_THROWS_AS(ball_query(q, s, 0.0), ParameterError);
}

TEST_CASE("knn and ball query match brute force") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + (rng() % 512);
    PointCloud s = oracle::random_cloud(rng, n);
    const bool cross = t % 2 == 1;
    PointCloud q = cross ? oracle::random_cloud(rng, 1 + rng() % 256) : s;
    const std::size_t k = 1 + rng() % 24;
    const double r = 0.02 + 0.2 * std::uniform_real_distribution<double>()(rng);
    CHECK(rows_of(knn(q, s, k)) == oracle::knn(q, s, k));
    CHECK(rows_of(ball_query(q, s, r)) == oracle::ball(q, s, r));
    validate(knn(q, s, k), s.size());
  }
}

TEST_CASE("ball query translation invariance") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    PointCloud s = oracle::random_cloud(rng, 200), q = oracle::random_cloud(rng, 40);
    // power-of-two shift; rounding of the shifted offsets could in principle flip a boundary pair
    PointCloud s2 = s, q2 = q;
    const Vec3 d{4.0, -8.0, 16.0};
    for (auto& p : s2.positions) p = p + d;
    for (auto& p : q2.positions) p = p + d;
    auto a = rows_of(ball_query(q, s, 0.1)), b = rows_of(ball_query(q2, s2, 0.1));
    CHECK(a == b);
  }
}

TEST_CASE("neighbor list validation and sorting") {
  NeighborList nl;
  nl.append(std::vector<std::uint32_t>{2, 0});
  nl.append(std::vector<std::uint32_t>{});
  nl.append(std::vector<std::uint32_t>{1});
  CHECK(nl.num_queries() == 3);
  CHECK(nl.total() == 3);
  validate(nl, 3);
  CHECK_THROWS_AS(validate(nl, 2), IndexError);
  NeighborList sorted = sorted_by_index(nl);
  CHECK(rows_of(sorted)[0] == std::vector<std::uint32_t>{0, 2});
  NeighborList dup;
  dup.append(std::vector<std::uint32_t>{1, 1});
  CHECK_THROWS_AS(validate(dup, 3), IndexError);
  CHECK_THROWS_AS(NeighborList({0, 3}, {0, 1}), IndexError);
}

TEST_CASE("farthest distance statistics") {
  // every neighborhood a single point at distance c
  PointCloud q = line_cloud({0.0, 10.0});
  PointCloud s = line_cloud({0.25, 10.25});
  NeighborList nl;
  nl.append(std::vector<std::uint32_t>{0});
  nl.append(std::vector<std::uint32_t>{1});
  auto st = farthest_distance_stats(nl, q, s, 0.25);
  CHECK(st.mean == doctest::Approx(1.0));
  CHECK(st.variance == doctest::Approx(0.0));
  CHECK(st.count == 2);

  PointCloud s2 = line_cloud({1.0, 13.0, 0.5});
  NeighborList nl2;
  nl2.append(std::vector<std::uint32_t>{0, 2});
  nl2.append(std::vector<std::uint32_t>{1});
  auto st2 = farthest_distance_stats(nl2, q, s2, 1.0);
  CHECK(st2.mean == doctest::Approx(2.0));
  CHECK(st2.variance == doctest::Approx(1.0));

  NeighborList empty;
  empty.append(std::vector<std::uint32_t>{});
  CHECK_THROWS_AS(farthest_distance_stats(empty, line_cloud({0.0}), s, 1.0), StatisticsError);

  FarthestDistancePool pool;
  pool.add(nl, q, s, 0.25);
  pool.add(nl2, q, s2, 1.0);
  CHECK(pool.count() == 4);
  CHECK(pool.stats().mean == doctest::Approx((1 + 1 + 1 + 3) / 4.0));

  CHECK(average_neighbor_distance(nl2, q, s2) == doctest::Approx((1.0 + 0.5 + 3.0) / 3.0));
}

TEST_CASE("point cloud validation") {
  PointCloud c = line_cloud({0.0, 1.0});
  validate(c);
  c.labels = std::vector<int>{0, 3};
  CHECK_THROWS_AS(validate(c, 2), ParameterError);
  c.labels = std::vector<int>{0};
  CHECK_THROWS_AS(validate(c), DimensionError);
  c.labels.reset();
  c.positions[0][1] = std::nan("");
  CHECK_THROWS_AS(validate(c), DomainError);
}
