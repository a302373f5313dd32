#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pne/embeddings.hpp"
#include "pne/geometry.hpp"
#include "pne/numerics.hpp"

namespace pne {

enum class Normalization { Sum, Mean };

// Continuous point convolution
//
//   out_o(x) = norm(x) * sum_{y in N(x)} sum_c f_c(y) <kernel[c, o, :], P^T e(y - x)> + bias_o
//
// where e is the point-neighborhood embedding, P (raw_dim x common_dim)
// maps every embedding to the same width, and norm(x) is 1 (Sum) or
// 1 / |N(x)| (Mean). Neighbors are visited in ascending support index, so
// the result does not depend on the order stored in the neighbor list.
struct ConvLayer {
  Embedding embedding;
  Matrix projection;  // raw_dim x common_dim
  Tensor3 kernel;     // in x out x common_dim
  std::optional<std::vector<double>> bias;
  Normalization normalize = Normalization::Mean;

  std::size_t in_features() const noexcept { return kernel.dim0(); }
  std::size_t out_features() const noexcept { return kernel.dim1(); }
  std::size_t common_dim() const noexcept { return kernel.dim2(); }
  std::size_t parameter_count() const;
};

void validate(const ConvLayer& layer);

struct ConvGradients {
  Matrix d_features;  // support x in
  Tensor3 d_kernel;
  Matrix d_projection;
  EmbeddingParamGradients d_embedding;
  std::optional<std::vector<double>> d_bias;
  // Filled only when position gradients are requested.
  std::vector<Vec3> d_query_positions;
  std::vector<Vec3> d_support_positions;
};

// Intermediates of a forward call, reusable by the matching backward call.
struct ConvCache {
  Matrix raw;        // pairs x raw_dim, pairs in visiting order
  Matrix projected;  // pairs x common_dim
  Matrix gathered;   // queries x (in * common_dim): sum_y f_c(y) (P^T e)_k
};

struct ConvBackwardOptions {
  bool position_gradients = true;
  bool feature_gradients = true;
};

// M x out features for the query cloud. Empty neighborhoods produce the bias
// (or zero).
Matrix conv_forward(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                    const NeighborList& neighbors, const Matrix& features, ConvCache* cache = nullptr);

// Exact gradients of sum(upstream * conv_forward(...)). A cache from the
// forward call on the same inputs skips recomputation.
ConvGradients conv_backward(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                            const NeighborList& neighbors, const Matrix& features, const Matrix& upstream,
                            const ConvCache* cache = nullptr, const ConvBackwardOptions& options = {});

// kernel ~ N(0, 1/(common_dim * in)) truncated at two standard deviations,
// projection ~ N(0, 1/raw_dim), bias zero (when requested).
ConvLayer init_conv_layer(Embedding embedding, std::size_t in, std::size_t out, std::size_t common_dim,
                          std::uint64_t seed, bool with_bias = false,
                          Normalization normalize = Normalization::Mean);

}  // namespace pne
