#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pne/numerics.hpp"

namespace pne {

using Vec3 = std::array<double, 3>;
static_assert(sizeof(Vec3) == 3 * sizeof(double), "Vec3 must pack as three doubles");

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double squared_norm(const Vec3& a) { return (a[0] * a[0] + a[1] * a[1]) + a[2] * a[2]; }
double norm(const Vec3& a);

// Positions in meters with optional per-point features and class labels.
// cell_size records the subsampling cell that produced the cloud, if any.
struct PointCloud {
  std::vector<Vec3> positions;
  std::optional<Matrix> features;
  std::optional<std::vector<int>> labels;
  std::optional<double> cell_size;

  std::size_t size() const noexcept { return positions.size(); }
  bool empty() const noexcept { return positions.empty(); }
  const double* packed_xyz() const noexcept { return positions.empty() ? nullptr : positions.front().data(); }
};

// Throws DomainError / DimensionError / ParameterError on a broken invariant.
// Labels are range-checked only when num_classes is given.
void validate(const PointCloud& cloud, std::optional<int> num_classes = std::nullopt);

// Ragged query -> support index lists in CSR form.
class NeighborList {
 public:
  NeighborList() : offsets_{0} {}
  NeighborList(std::vector<std::size_t> offsets, std::vector<std::uint32_t> indices);

  void append(std::span<const std::uint32_t> neighbors);

  std::size_t num_queries() const noexcept { return offsets_.size() - 1; }
  std::size_t total() const noexcept { return indices_.size(); }
  std::span<const std::uint32_t> neighbors(std::size_t query) const {
    return {indices_.data() + offsets_[query], offsets_[query + 1] - offsets_[query]};
  }
  std::span<const std::size_t> offsets() const noexcept { return offsets_; }
  std::span<const std::uint32_t> indices() const noexcept { return indices_; }

  friend bool operator==(const NeighborList&, const NeighborList&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> indices_;
};

// Checks offsets, index range, and per-query uniqueness.
void validate(const NeighborList& neighbors, std::size_t support_size);

// Copy with every query's range sorted ascending by support index.
NeighborList sorted_by_index(const NeighborList& neighbors);

struct CellKey {
  std::int64_t x = 0, y = 0, z = 0;
  friend bool operator==(const CellKey&, const CellKey&) = default;
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept;
};

CellKey cell_of(const Vec3& p, double cell_size, const Vec3& origin = {0.0, 0.0, 0.0});

// Uniform hash grid: cell coordinate = floor((p - origin) / cell_size).
class GridIndex {
 public:
  GridIndex(std::span<const Vec3> positions, double cell_size, const Vec3& origin = {0.0, 0.0, 0.0});

  double cell_size() const noexcept { return cell_size_; }
  const Vec3& origin() const noexcept { return origin_; }
  std::size_t num_cells() const noexcept { return cells_.size(); }
  CellKey min_cell() const noexcept { return min_; }
  CellKey max_cell() const noexcept { return max_; }
  CellKey cell_of(const Vec3& p) const { return pne::cell_of(p, cell_size_, origin_); }

  // Point indices in a cell (ascending), or nullptr for an empty cell.
  const std::vector<std::uint32_t>* find(const CellKey& key) const;

  const std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash>& cells() const noexcept {
    return cells_;
  }

 private:
  double cell_size_;
  Vec3 origin_;
  CellKey min_{}, max_{};
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> cells_;
};

GridIndex build_grid_index(const PointCloud& cloud, double cell_size);

struct SubsampleResult {
  PointCloud cloud;
  // parent_map[i] lists the input indices averaged into output point i.
  std::vector<std::vector<std::uint32_t>> parent_map;
};

// One output point per non-empty cell, ordered by cell coordinate
// (lexicographic x, y, z). Positions and features are member means; the
// label is the majority member label with ties going to the smaller id.
SubsampleResult cell_average_subsample(const PointCloud& cloud, double cell_size,
                                       const Vec3& origin = {0.0, 0.0, 0.0});

// k nearest support points per query, ordered by (distance, index). Fewer
// than k support points yields every support point.
NeighborList knn(const PointCloud& query, const PointCloud& support, std::size_t k);

// Support points within radius (inclusive, compared as squared distances),
// ordered by index. With max_neighbors, only the closest are kept (ties to
// the smaller index).
NeighborList ball_query(const PointCloud& query, const PointCloud& support, double radius,
                        std::optional<std::size_t> max_neighbors = std::nullopt);

struct DistanceStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
};

// Per-query farthest neighbor distance divided by cell_size, summarized
// with the population mean and variance. Empty neighborhoods are skipped.
DistanceStats farthest_distance_stats(const NeighborList& neighbors, const PointCloud& query,
                                      const PointCloud& support, double cell_size);

// Pools the normalized farthest distances of many clouds into one statistic.
class FarthestDistancePool {
 public:
  void add(const NeighborList& neighbors, const PointCloud& query, const PointCloud& support, double cell_size);
  DistanceStats stats() const;
  std::size_t count() const noexcept { return samples_.size(); }

 private:
  std::vector<double> samples_;
};

// Mean query-to-neighbor distance over all (query, neighbor) pairs.
double average_neighbor_distance(const NeighborList& neighbors, const PointCloud& query,
                                 const PointCloud& support);

}  // namespace pne
