#include "pne/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

#include "pne/errors.hpp"
#include "pne/simd.hpp"

namespace pne {

double norm(const Vec3& a) { return std::sqrt(squared_norm(a)); }

void validate(const PointCloud& cloud, std::optional<int> num_classes) {
  for (const auto& p : cloud.positions) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw DomainError("point cloud contains a non-finite position");
    }
  }
  if (cloud.features && cloud.features->rows() != cloud.size()) {
    throw DimensionError("feature rows " + std::to_string(cloud.features->rows()) + " != point count " +
                         std::to_string(cloud.size()));
  }
  if (cloud.labels) {
    if (cloud.labels->size() != cloud.size()) throw DimensionError("label count does not match point count");
    if (num_classes) {
      for (int l : *cloud.labels) {
        if (l < 0 || l >= *num_classes) throw ParameterError("label " + std::to_string(l) + " out of range");
      }
    }
  }
  if (cloud.cell_size && !(*cloud.cell_size > 0.0)) throw ParameterError("cell size must be positive");
}

// ---------------------------------------------------------------------------
// NeighborList

NeighborList::NeighborList(std::vector<std::size_t> offsets, std::vector<std::uint32_t> indices)
    : offsets_(std::move(offsets)), indices_(std::move(indices)) {
  if (offsets_.empty() || offsets_.front() != 0 || offsets_.back() != indices_.size()) {
    throw IndexError("neighbor offsets must start at 0 and end at the index count");
  }
  for (std::size_t i = 1; i < offsets_.size(); ++i) {
    if (offsets_[i] < offsets_[i - 1]) throw IndexError("neighbor offsets must be non-decreasing");
  }
}

void NeighborList::append(std::span<const std::uint32_t> neighbors) {
  indices_.insert(indices_.end(), neighbors.begin(), neighbors.end());
  offsets_.push_back(indices_.size());
}

void validate(const NeighborList& neighbors, std::size_t support_size) {
  std::vector<std::uint32_t> scratch;
  for (std::size_t q = 0; q < neighbors.num_queries(); ++q) {
    auto range = neighbors.neighbors(q);
    scratch.assign(range.begin(), range.end());
    std::sort(scratch.begin(), scratch.end());
    if (!scratch.empty() && scratch.back() >= support_size) {
      throw IndexError("neighbor index " + std::to_string(scratch.back()) + " >= support size " +
                       std::to_string(support_size));
    }
    if (std::adjacent_find(scratch.begin(), scratch.end()) != scratch.end()) {
      throw IndexError("duplicate neighbor index in query " + std::to_string(q));
    }
  }
}

NeighborList sorted_by_index(const NeighborList& neighbors) {
  std::vector<std::uint32_t> indices(neighbors.indices().begin(), neighbors.indices().end());
  auto offsets = neighbors.offsets();
  for (std::size_t q = 0; q + 1 < offsets.size(); ++q) {
    std::sort(indices.begin() + static_cast<std::ptrdiff_t>(offsets[q]),
              indices.begin() + static_cast<std::ptrdiff_t>(offsets[q + 1]));
  }
  return NeighborList({offsets.begin(), offsets.end()}, std::move(indices));
}

// ---------------------------------------------------------------------------
// Grid

std::size_t CellKeyHash::operator()(const CellKey& k) const noexcept {
  // Large primes from the classic spatial-hashing scheme.
  const auto ux = static_cast<std::uint64_t>(k.x) * 73856093ULL;
  const auto uy = static_cast<std::uint64_t>(k.y) * 19349663ULL;
  const auto uz = static_cast<std::uint64_t>(k.z) * 83492791ULL;
  return static_cast<std::size_t>(ux ^ uy ^ uz);
}

CellKey cell_of(const Vec3& p, double cell_size, const Vec3& origin) {
  return {static_cast<std::int64_t>(std::floor((p[0] - origin[0]) / cell_size)),
          static_cast<std::int64_t>(std::floor((p[1] - origin[1]) / cell_size)),
          static_cast<std::int64_t>(std::floor((p[2] - origin[2]) / cell_size))};
}

GridIndex::GridIndex(std::span<const Vec3> positions, double cell_size, const Vec3& origin)
    : cell_size_(cell_size), origin_(origin) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ParameterError("grid cell size must be positive");
  if (positions.empty()) throw ParameterError("cannot index an empty point cloud");
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  min_ = {hi, hi, hi};
  max_ = {lo, lo, lo};
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const CellKey key = cell_of(positions[i]);
    cells_[key].push_back(static_cast<std::uint32_t>(i));
    min_ = {std::min(min_.x, key.x), std::min(min_.y, key.y), std::min(min_.z, key.z)};
    max_ = {std::max(max_.x, key.x), std::max(max_.y, key.y), std::max(max_.z, key.z)};
  }
}

const std::vector<std::uint32_t>* GridIndex::find(const CellKey& key) const {
  auto it = cells_.find(key);
  return it == cells_.end() ? nullptr : &it->second;
}

GridIndex build_grid_index(const PointCloud& cloud, double cell_size) {
  return GridIndex(cloud.positions, cell_size);
}

// ---------------------------------------------------------------------------
// Cell-average subsampling

SubsampleResult cell_average_subsample(const PointCloud& cloud, double cell_size, const Vec3& origin) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw ParameterError("subsample cell size must be positive");
  validate(cloud);

  std::map<CellKey, std::vector<std::uint32_t>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cells[cell_of(cloud.positions[i], cell_size, origin)].push_back(static_cast<std::uint32_t>(i));
  }

  SubsampleResult out;
  out.cloud.cell_size = cell_size;
  out.cloud.positions.reserve(cells.size());
  out.parent_map.reserve(cells.size());
  const std::size_t channels = cloud.features ? cloud.features->cols() : 0;
  if (cloud.features) out.cloud.features = Matrix(cells.size(), channels);
  if (cloud.labels) out.cloud.labels = std::vector<int>();

  std::size_t row = 0;
  for (auto& [key, members] : cells) {
    const double inv = 1.0 / static_cast<double>(members.size());
    Vec3 sum{0.0, 0.0, 0.0};
    for (std::uint32_t m : members) sum = sum + cloud.positions[m];
    out.cloud.positions.push_back(inv * sum);

    if (cloud.features) {
      auto dst = out.cloud.features->row(row);
      for (std::uint32_t m : members) {
        auto src = cloud.features->row(m);
        for (std::size_t c = 0; c < channels; ++c) dst[c] += src[c];
      }
      for (double& v : dst) v *= inv;
    }
    if (cloud.labels) {
      std::map<int, std::size_t> votes;
      for (std::uint32_t m : members) ++votes[(*cloud.labels)[m]];
      int best = votes.begin()->first;
      std::size_t best_count = 0;
      for (const auto& [label, count] : votes) {
        if (count > best_count) {  // ascending label order keeps ties on the smaller id
          best = label;
          best_count = count;
        }
      }
      out.cloud.labels->push_back(best);
    }
    out.parent_map.push_back(std::move(members));
    ++row;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Neighborhood queries

namespace {

using Candidate = std::pair<double, std::uint32_t>;  // (squared distance, index)

double default_knn_cell(const PointCloud& support) {
  if (support.cell_size) return *support.cell_size;
  Vec3 lo = support.positions.front(), hi = lo;
  for (const auto& p : support.positions) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  if (!(extent > 0.0)) return 1.0;
  return extent / std::cbrt(static_cast<double>(support.size()));
}

void score_cell(const simd::KernelTable& kt, const double* xyz, const std::vector<std::uint32_t>& members,
                const Vec3& q, std::vector<double>& scratch, std::vector<Candidate>& out) {
  scratch.resize(members.size());
  kt.gathered_sq_distances(xyz, members.data(), members.size(), q.data(), scratch.data());
  for (std::size_t i = 0; i < members.size(); ++i) out.emplace_back(scratch[i], members[i]);
}

}  // namespace

NeighborList knn(const PointCloud& query, const PointCloud& support, std::size_t k) {
  if (k == 0) throw ParameterError("knn requires k >= 1");
  if (support.empty()) throw ParameterError("knn requires a non-empty support cloud");

  const GridIndex grid(support.positions, default_knn_cell(support));
  const simd::KernelTable& kt = simd::active();
  const double* xyz = support.packed_xyz();
  const double cs = grid.cell_size();
  const CellKey lo = grid.min_cell(), hi = grid.max_cell();

  NeighborList result;
  std::vector<Candidate> candidates;
  std::vector<double> scratch;
  std::vector<std::uint32_t> chosen;

  for (const Vec3& q : query.positions) {
    candidates.clear();
    const CellKey qc = grid.cell_of(q);
    for (std::int64_t ring = 0;; ++ring) {
      // Visit cells at Chebyshev distance exactly `ring`, clipped to the grid bounds.
      const std::int64_t x0 = std::max(qc.x - ring, lo.x), x1 = std::min(qc.x + ring, hi.x);
      const std::int64_t y0 = std::max(qc.y - ring, lo.y), y1 = std::min(qc.y + ring, hi.y);
      const std::int64_t z0 = std::max(qc.z - ring, lo.z), z1 = std::min(qc.z + ring, hi.z);
      for (std::int64_t x = x0; x <= x1; ++x) {
        for (std::int64_t y = y0; y <= y1; ++y) {
          const bool xy_shell = std::abs(x - qc.x) == ring || std::abs(y - qc.y) == ring;
          for (std::int64_t z = z0; z <= z1; ++z) {
            if (!xy_shell && std::abs(z - qc.z) != ring) {
              // Jump straight to the far z face of the shell.
              if (z < qc.z + ring) z = std::max(z, qc.z + ring - 1);
              continue;
            }
            if (const auto* members = grid.find({x, y, z})) score_cell(kt, xyz, *members, q, scratch, candidates);
          }
        }
      }

      const bool covered = qc.x - ring <= lo.x && qc.x + ring >= hi.x && qc.y - ring <= lo.y &&
                           qc.y + ring >= hi.y && qc.z - ring <= lo.z && qc.z + ring >= hi.z;
      if (covered) break;
      if (candidates.size() >= k && ring >= 1) {
        // Unvisited points lie farther than ring * cs from q; the margin absorbs
        // rounding in the cell assignment of q.
        std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         candidates.end());
        const double bound = (static_cast<double>(ring) - 1e-6) * cs;
        if (candidates[k - 1].first <= bound * bound) break;
      }
    }
    const std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end());
    chosen.clear();
    for (std::size_t i = 0; i < take; ++i) chosen.push_back(candidates[i].second);
    result.append(chosen);
  }
  return result;
}

NeighborList ball_query(const PointCloud& query, const PointCloud& support, double radius,
                        std::optional<std::size_t> max_neighbors) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ParameterError("ball query radius must be positive");
  if (max_neighbors && *max_neighbors == 0) throw ParameterError("max_neighbors must be >= 1");
  NeighborList result;
  if (support.empty()) {
    for (std::size_t q = 0; q < query.size(); ++q) result.append({});
    return result;
  }

  // Slightly oversized cells keep every in-range point inside the 27-cell
  // stencil despite rounding in the cell assignment.
  const GridIndex grid(support.positions, radius * (1.0 + 1e-9));
  const simd::KernelTable& kt = simd::active();
  const double* xyz = support.packed_xyz();
  const double r2 = radius * radius;

  std::vector<Candidate> candidates;
  std::vector<double> scratch;
  std::vector<std::uint32_t> chosen;
  for (const Vec3& q : query.positions) {
    candidates.clear();
    const CellKey qc = grid.cell_of(q);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto* members = grid.find({qc.x + dx, qc.y + dy, qc.z + dz});
          if (members == nullptr) continue;
          scratch.resize(members->size());
          kt.gathered_sq_distances(xyz, members->data(), members->size(), q.data(), scratch.data());
          for (std::size_t i = 0; i < members->size(); ++i) {
            if (scratch[i] <= r2) candidates.emplace_back(scratch[i], (*members)[i]);
          }
        }
      }
    }
    if (max_neighbors && candidates.size() > *max_neighbors) {
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(*max_neighbors),
                        candidates.end());
      candidates.resize(*max_neighbors);
    }
    chosen.clear();
    for (const auto& c : candidates) chosen.push_back(c.second);
    std::sort(chosen.begin(), chosen.end());
    result.append(chosen);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Receptive-field statistics

namespace {

void collect_farthest(const NeighborList& neighbors, const PointCloud& query, const PointCloud& support,
                      double cell_size, std::vector<double>& out) {
  if (!(cell_size > 0.0)) throw ParameterError("cell size must be positive");
  if (neighbors.num_queries() != query.size()) throw DimensionError("neighbor list does not match query cloud");
  for (std::size_t q = 0; q < neighbors.num_queries(); ++q) {
    auto range = neighbors.neighbors(q);
    if (range.empty()) continue;
    double best = 0.0;
    for (std::uint32_t s : range) {
      if (s >= support.size()) throw IndexError("neighbor index out of range");
      best = std::max(best, squared_norm(support.positions[s] - query.positions[q]));
    }
    out.push_back(std::sqrt(best) / cell_size);
  }
}

DistanceStats summarize(const std::vector<double>& samples) {
  if (samples.empty()) throw StatisticsError("no non-empty neighborhoods");
  const double n = static_cast<double>(samples.size());
  const double mean = deterministic_sum(samples) / n;
  std::vector<double> sq(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sq[i] = (samples[i] - mean) * (samples[i] - mean);
  return {mean, deterministic_sum(sq) / n, samples.size()};
}

}  // namespace

DistanceStats farthest_distance_stats(const NeighborList& neighbors, const PointCloud& query,
                                      const PointCloud& support, double cell_size) {
  std::vector<double> samples;
  collect_farthest(neighbors, query, support, cell_size, samples);
  return summarize(samples);
}

void FarthestDistancePool::add(const NeighborList& neighbors, const PointCloud& query, const PointCloud& support,
                               double cell_size) {
  collect_farthest(neighbors, query, support, cell_size, samples_);
}

DistanceStats FarthestDistancePool::stats() const { return summarize(samples_); }

double average_neighbor_distance(const NeighborList& neighbors, const PointCloud& query,
                                 const PointCloud& support) {
  std::vector<double> d;
  d.reserve(neighbors.total());
  for (std::size_t q = 0; q < neighbors.num_queries(); ++q) {
    for (std::uint32_t s : neighbors.neighbors(q)) d.push_back(norm(support.positions[s] - query.positions[q]));
  }
  if (d.empty()) throw StatisticsError("no neighbor pairs");
  return deterministic_sum(d) / static_cast<double>(d.size());
}

}  // namespace pne
