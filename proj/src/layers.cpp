#include "pne/layers.hpp"

#include <cmath>
#include <random>

#include "pne/errors.hpp"
#include "pne/simd.hpp"

namespace pne {

LinearLayer init_linear(std::size_t in, std::size_t out, std::uint64_t seed) {
  if (in == 0 || out == 0) throw ParameterError("linear layer dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  LinearLayer layer{Matrix(in, out), std::vector<double>(out, 0.0)};
  for (double& w : layer.weights.values()) w = uni(rng);
  return layer;
}

Matrix linear_forward(const LinearLayer& layer, const Matrix& x) {
  if (x.cols() != layer.in_features()) {
    throw DimensionError("linear input width " + std::to_string(x.cols()) + " != " +
                         std::to_string(layer.in_features()));
  }
  const simd::KernelTable& kt = simd::active();
  const std::size_t out = layer.out_features();
  Matrix y(x.rows(), out);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    double* dst = y.row(n).data();
    std::copy(layer.bias.begin(), layer.bias.end(), dst);
    const auto src = x.row(n);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] != 0.0) kt.axpy(src[i], layer.weights.row(i).data(), dst, out);
    }
  }
  return y;
}

Matrix linear_backward(const LinearLayer& layer, const Matrix& x, const Matrix& dy, LinearLayer& grads,
                       bool need_input_grad) {
  if (dy.rows() != x.rows() || dy.cols() != layer.out_features()) throw DimensionError("linear upstream shape");
  const simd::KernelTable& kt = simd::active();
  const std::size_t out = layer.out_features();
  Matrix dx = need_input_grad ? Matrix(x.rows(), layer.in_features()) : Matrix();
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const double* g = dy.row(n).data();
    const auto src = x.row(n);
    kt.axpy(1.0, g, grads.bias.data(), out);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (src[i] != 0.0) kt.axpy(src[i], g, grads.weights.row(i).data(), out);
      if (need_input_grad) dx(n, i) = kt.dot(layer.weights.row(i).data(), g, out);
    }
  }
  return dx;
}

LayerNorm init_layer_norm(std::size_t width) {
  return {std::vector<double>(width, 1.0), std::vector<double>(width, 0.0)};
}

Matrix layer_norm_forward(const LayerNorm& norm, const Matrix& x, LayerNormCache& cache) {
  const std::size_t w = x.cols();
  if (norm.scale.size() != w) throw DimensionError("layer norm width mismatch");
  cache.normalized = Matrix(x.rows(), w);
  cache.inv_std.assign(x.rows(), 0.0);
  Matrix y(x.rows(), w);
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const auto src = x.row(n);
    double mean = 0.0;
    for (double v : src) mean += v;
    mean /= static_cast<double>(w);
    double var = 0.0;
    for (double v : src) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w);
    const double inv = 1.0 / std::sqrt(var + norm.eps);
    cache.inv_std[n] = inv;
    auto xhat = cache.normalized.row(n);
    auto dst = y.row(n);
    for (std::size_t c = 0; c < w; ++c) {
      xhat[c] = (src[c] - mean) * inv;
      dst[c] = norm.scale[c] * xhat[c] + norm.shift[c];
    }
  }
  return y;
}

Matrix layer_norm_backward(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& dy, LayerNorm& grads) {
  const std::size_t w = dy.cols();
  Matrix dx(dy.rows(), w);
  std::vector<double> dxhat(w);
  for (std::size_t n = 0; n < dy.rows(); ++n) {
    const auto g = dy.row(n);
    const auto xhat = cache.normalized.row(n);
    double sum = 0.0, sum_x = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      grads.scale[c] += g[c] * xhat[c];
      grads.shift[c] += g[c];
      dxhat[c] = g[c] * norm.scale[c];
      sum += dxhat[c];
      sum_x += dxhat[c] * xhat[c];
    }
    const double inv_w = 1.0 / static_cast<double>(w);
    auto dst = dx.row(n);
    for (std::size_t c = 0; c < w; ++c) {
      dst[c] = cache.inv_std[n] * (dxhat[c] - inv_w * sum - xhat[c] * inv_w * sum_x);
    }
  }
  return dx;
}

Matrix gelu(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  auto src = x.values();
  auto dst = y.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activation_forward(ActivationKind::GELU, src[i]);
  return y;
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  Matrix dx(x.rows(), x.cols());
  auto src = x.values();
  auto g = dy.values();
  auto dst = dx.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = g[i] * activation_derivative(ActivationKind::GELU, src[i]);
  return dx;
}

void append_params(LinearLayer& layer, const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".weight", {layer.weights.rows(), layer.weights.cols()}, layer.weights.values()});
  out.push_back({prefix + ".bias", {layer.bias.size()}, layer.bias});
}

void append_params(LayerNorm& layer, const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".scale", {layer.scale.size()}, layer.scale});
  out.push_back({prefix + ".shift", {layer.shift.size()}, layer.shift});
}

void append_params(ConvLayer& layer, const std::string& prefix, std::vector<ParamView>& out) {
  out.push_back({prefix + ".projection", {layer.projection.rows(), layer.projection.cols()},
                 layer.projection.values()});
  out.push_back({prefix + ".kernel", {layer.kernel.dim0(), layer.kernel.dim1(), layer.kernel.dim2()},
                 layer.kernel.values()});
  if (layer.bias) out.push_back({prefix + ".bias", {layer.bias->size()}, *layer.bias});
  if (auto* mlp = std::get_if<MlpEmbedding>(&layer.embedding.value)) {
    out.push_back({prefix + ".embedding.weight", {mlp->weights.rows(), 3}, mlp->weights.values()});
    out.push_back({prefix + ".embedding.bias", {mlp->biases.size()}, mlp->biases});
  }
}

LinearLayer zeros_like(const LinearLayer& layer) {
  return {Matrix(layer.weights.rows(), layer.weights.cols()), std::vector<double>(layer.bias.size(), 0.0)};
}

LayerNorm zeros_like(const LayerNorm& layer) {
  return {std::vector<double>(layer.scale.size(), 0.0), std::vector<double>(layer.shift.size(), 0.0), layer.eps};
}

ConvLayer zeros_like(const ConvLayer& layer) {
  ConvLayer z = layer;
  z.projection.fill(0.0);
  z.kernel.fill(0.0);
  if (z.bias) std::fill(z.bias->begin(), z.bias->end(), 0.0);
  if (auto* mlp = std::get_if<MlpEmbedding>(&z.embedding.value)) {
    mlp->weights.fill(0.0);
    std::fill(mlp->biases.begin(), mlp->biases.end(), 0.0);
  }
  return z;
}

void accumulate(ConvLayer& grads, const ConvGradients& g) {
  const simd::KernelTable& kt = simd::active();
  kt.axpy(1.0, g.d_projection.values().data(), grads.projection.values().data(), grads.projection.size());
  kt.axpy(1.0, g.d_kernel.values().data(), grads.kernel.values().data(), grads.kernel.size());
  if (grads.bias && g.d_bias) kt.axpy(1.0, g.d_bias->data(), grads.bias->data(), grads.bias->size());
  if (auto* mlp = std::get_if<MlpEmbedding>(&grads.embedding.value); mlp != nullptr && !g.d_embedding.empty()) {
    kt.axpy(1.0, g.d_embedding.d_weights.values().data(), mlp->weights.values().data(), mlp->weights.size());
    kt.axpy(1.0, g.d_embedding.d_biases.data(), mlp->biases.data(), mlp->biases.size());
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pne
