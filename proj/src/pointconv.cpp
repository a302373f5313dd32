#include "pne/pointconv.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pne/errors.hpp"
#include "pne/simd.hpp"

namespace pne {

std::size_t ConvLayer::parameter_count() const {
  std::size_t n = projection.size() + kernel.size() + (bias ? bias->size() : 0);
  if (const auto* mlp = std::get_if<MlpEmbedding>(&embedding.value)) n += mlp->weights.size() + mlp->biases.size();
  return n;
}

void validate(const ConvLayer& layer) {
  validate(layer.embedding);
  if (layer.projection.rows() != layer.embedding.raw_dim()) {
    throw DimensionError("projection rows " + std::to_string(layer.projection.rows()) + " != embedding dim " +
                         std::to_string(layer.embedding.raw_dim()));
  }
  if (layer.projection.cols() != layer.common_dim()) throw DimensionError("projection cols != kernel common dim");
  if (layer.in_features() == 0 || layer.out_features() == 0 || layer.common_dim() == 0) {
    throw DimensionError("convolution dimensions must be >= 1");
  }
  if (layer.bias && layer.bias->size() != layer.out_features()) throw DimensionError("bias length != out features");
}

namespace {

struct OrderedNeighbors {
  std::vector<std::uint32_t> scratch;

  std::span<const std::uint32_t> get(const NeighborList& list, std::size_t q) {
    auto range = list.neighbors(q);
    if (std::is_sorted(range.begin(), range.end())) return range;
    scratch.assign(range.begin(), range.end());
    std::sort(scratch.begin(), scratch.end());
    return scratch;
  }
};

void check_inputs(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                  const NeighborList& neighbors, const Matrix& features) {
  validate(layer);
  if (features.rows() != support.size()) {
    throw DimensionError("feature rows " + std::to_string(features.rows()) + " != support size " +
                         std::to_string(support.size()));
  }
  if (features.cols() != layer.in_features()) {
    throw DimensionError("feature width " + std::to_string(features.cols()) + " != layer input width " +
                         std::to_string(layer.in_features()));
  }
  if (neighbors.num_queries() != query.size()) throw DimensionError("neighbor list does not match query cloud");
  for (std::uint32_t s : neighbors.indices()) {
    if (s >= support.size()) throw IndexError("neighbor index " + std::to_string(s) + " out of range");
  }
}

double normalizer(const ConvLayer& layer, std::size_t count) {
  return layer.normalize == Normalization::Mean ? 1.0 / static_cast<double>(count) : 1.0;
}

void fill_cache(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                const NeighborList& neighbors, const Matrix& features, ConvCache& cache) {
  const simd::KernelTable& kt = simd::active();
  const std::size_t raw_dim = layer.embedding.raw_dim();
  const std::size_t ec = layer.common_dim();
  const std::size_t in = layer.in_features();
  cache.raw = Matrix(neighbors.total(), raw_dim);
  cache.projected = Matrix(neighbors.total(), ec);
  cache.gathered = Matrix(query.size(), in * ec);

  OrderedNeighbors ordered;
  std::size_t pair = 0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    double* g = cache.gathered.row(q).data();
    for (std::uint32_t s : ordered.get(neighbors, q)) {
      auto raw = cache.raw.row(pair);
      embed_one(layer.embedding, support.positions[s] - query.positions[q], raw);
      double* pe = cache.projected.row(pair).data();
      for (std::size_t r = 0; r < raw_dim; ++r) {
        if (raw[r] != 0.0) kt.axpy(raw[r], layer.projection.row(r).data(), pe, ec);
      }
      const auto f = features.row(s);
      for (std::size_t c = 0; c < in; ++c) kt.axpy(f[c], pe, g + c * ec, ec);
      ++pair;
    }
  }
}

}  // namespace

Matrix conv_forward(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                    const NeighborList& neighbors, const Matrix& features, ConvCache* cache) {
  check_inputs(layer, query, support, neighbors, features);
  ConvCache local;
  ConvCache& c = cache != nullptr ? *cache : local;
  fill_cache(layer, query, support, neighbors, features, c);

  const simd::KernelTable& kt = simd::active();
  const std::size_t ec = layer.common_dim();
  const std::size_t in = layer.in_features(), out = layer.out_features();
  Matrix result(query.size(), out);
  for (std::size_t q = 0; q < query.size(); ++q) {
    auto dst = result.row(q);
    const std::size_t count = neighbors.neighbors(q).size();
    if (count > 0) {
      const double* g = c.gathered.row(q).data();
      for (std::size_t ci = 0; ci < in; ++ci) {
        for (std::size_t o = 0; o < out; ++o) dst[o] += kt.dot(g + ci * ec, layer.kernel.fiber(ci, o).data(), ec);
      }
      const double scale = normalizer(layer, count);
      for (double& v : dst) v *= scale;
    }
    if (layer.bias) {
      for (std::size_t o = 0; o < out; ++o) dst[o] += (*layer.bias)[o];
    }
  }
  return result;
}

ConvGradients conv_backward(const ConvLayer& layer, const PointCloud& query, const PointCloud& support,
                            const NeighborList& neighbors, const Matrix& features, const Matrix& upstream,
                            const ConvCache* cache, const ConvBackwardOptions& options) {
  check_inputs(layer, query, support, neighbors, features);
  if (upstream.rows() != query.size() || upstream.cols() != layer.out_features()) {
    throw DimensionError("upstream gradient must be queries x out features");
  }
  ConvCache local;
  if (cache == nullptr || cache->raw.rows() != neighbors.total() || cache->gathered.rows() != query.size()) {
    fill_cache(layer, query, support, neighbors, features, local);
    cache = &local;
  }

  const simd::KernelTable& kt = simd::active();
  const std::size_t raw_dim = layer.embedding.raw_dim();
  const std::size_t ec = layer.common_dim();
  const std::size_t in = layer.in_features(), out = layer.out_features();

  ConvGradients grads;
  grads.d_features = Matrix(support.size(), options.feature_gradients ? in : 0);
  grads.d_kernel = Tensor3(in, out, ec);
  grads.d_projection = Matrix(raw_dim, ec);
  grads.d_embedding = zero_param_gradients(layer.embedding);
  if (layer.bias) grads.d_bias = std::vector<double>(out, 0.0);
  if (options.position_gradients) {
    grads.d_query_positions.assign(query.size(), Vec3{0.0, 0.0, 0.0});
    grads.d_support_positions.assign(support.size(), Vec3{0.0, 0.0, 0.0});
  }
  const bool embedding_backward = layer.embedding.has_parameters() || options.position_gradients;

  std::vector<double> scaled_up(out);
  std::vector<double> d_gathered(in * ec);
  std::vector<double> d_pe(ec);
  std::vector<double> d_raw(raw_dim);
  OrderedNeighbors ordered;
  std::size_t pair = 0;
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto up = upstream.row(q);
    if (grads.d_bias) {
      for (std::size_t o = 0; o < out; ++o) (*grads.d_bias)[o] += up[o];
    }
    const auto range = ordered.get(neighbors, q);
    if (range.empty()) continue;
    const double scale = normalizer(layer, range.size());
    for (std::size_t o = 0; o < out; ++o) scaled_up[o] = scale * up[o];

    const double* g = cache->gathered.row(q).data();
    std::fill(d_gathered.begin(), d_gathered.end(), 0.0);
    for (std::size_t c = 0; c < in; ++c) {
      for (std::size_t o = 0; o < out; ++o) {
        if (scaled_up[o] == 0.0) continue;
        kt.axpy(scaled_up[o], layer.kernel.fiber(c, o).data(), d_gathered.data() + c * ec, ec);
        kt.axpy(scaled_up[o], g + c * ec, grads.d_kernel.fiber(c, o).data(), ec);
      }
    }

    for (std::uint32_t s : range) {
      const double* pe = cache->projected.row(pair).data();
      const auto raw = cache->raw.row(pair);
      const auto f = features.row(s);
      if (options.feature_gradients) {
        auto df = grads.d_features.row(s);
        for (std::size_t c = 0; c < in; ++c) df[c] += kt.dot(d_gathered.data() + c * ec, pe, ec);
      }
      std::fill(d_pe.begin(), d_pe.end(), 0.0);
      for (std::size_t c = 0; c < in; ++c) kt.axpy(f[c], d_gathered.data() + c * ec, d_pe.data(), ec);
      for (std::size_t r = 0; r < raw_dim; ++r) {
        if (raw[r] != 0.0) kt.axpy(raw[r], d_pe.data(), grads.d_projection.row(r).data(), ec);
      }
      if (embedding_backward) {
        for (std::size_t r = 0; r < raw_dim; ++r) d_raw[r] = kt.dot(layer.projection.row(r).data(), d_pe.data(), ec);
        Vec3 d_offset{0.0, 0.0, 0.0};
        embed_backward_one(layer.embedding, support.positions[s] - query.positions[q], d_raw, &grads.d_embedding,
                           options.position_gradients ? &d_offset : nullptr);
        if (options.position_gradients) {
          grads.d_support_positions[s] = grads.d_support_positions[s] + d_offset;
          grads.d_query_positions[q] = grads.d_query_positions[q] - d_offset;
        }
      }
      ++pair;
    }
  }
  return grads;
}

ConvLayer init_conv_layer(Embedding embedding, std::size_t in, std::size_t out, std::size_t common_dim,
                          std::uint64_t seed, bool with_bias, Normalization normalize) {
  if (in == 0 || out == 0 || common_dim == 0) throw ParameterError("convolution dimensions must be >= 1");
  validate(embedding);
  std::mt19937_64 rng(seed);
  ConvLayer layer;
  const std::size_t raw_dim = embedding.raw_dim();
  layer.embedding = std::move(embedding);
  layer.normalize = normalize;

  std::normal_distribution<double> proj(0.0, std::sqrt(1.0 / static_cast<double>(raw_dim)));
  layer.projection = Matrix(raw_dim, common_dim);
  for (double& v : layer.projection.values()) v = proj(rng);

  std::normal_distribution<double> unit(0.0, 1.0);
  const double stddev = std::sqrt(1.0 / static_cast<double>(common_dim * in));
  layer.kernel = Tensor3(in, out, common_dim);
  for (double& v : layer.kernel.values()) {
    double z = unit(rng);
    while (std::abs(z) > 2.0) z = unit(rng);
    v = stddev * z;
  }
  if (with_bias) layer.bias = std::vector<double>(out, 0.0);
  return layer;
}

}  // namespace pne
