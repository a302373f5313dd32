#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pne/numerics.hpp"
#include "pne/pointconv.hpp"

namespace pne {

// Point-wise affine map y = x W + b.
struct LinearLayer {
  Matrix weights;  // in x out
  std::vector<double> bias;

  std::size_t in_features() const noexcept { return weights.rows(); }
  std::size_t out_features() const noexcept { return weights.cols(); }
};

// W uniform in +-1/sqrt(in), b = 0.
LinearLayer init_linear(std::size_t in, std::size_t out, std::uint64_t seed);

Matrix linear_forward(const LinearLayer& layer, const Matrix& x);

// Accumulates parameter gradients into grads and returns dL/dx (empty when
// need_input_grad is false).
Matrix linear_backward(const LinearLayer& layer, const Matrix& x, const Matrix& dy, LinearLayer& grads,
                       bool need_input_grad = true);

// Normalization over each point's feature vector with learnable scale and shift.
struct LayerNorm {
  std::vector<double> scale;
  std::vector<double> shift;
  double eps = 1e-6;
};

LayerNorm init_layer_norm(std::size_t width);

struct LayerNormCache {
  Matrix normalized;
  std::vector<double> inv_std;
};

Matrix layer_norm_forward(const LayerNorm& norm, const Matrix& x, LayerNormCache& cache);
Matrix layer_norm_backward(const LayerNorm& norm, const LayerNormCache& cache, const Matrix& dy, LayerNorm& grads);

// Element-wise exact GELU and its backward.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

// Named view of one parameter tensor.
struct ParamView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> values;
};

void append_params(LinearLayer& layer, const std::string& prefix, std::vector<ParamView>& out);
void append_params(LayerNorm& layer, const std::string& prefix, std::vector<ParamView>& out);
// Projection, kernel, optional bias, and the MLP embedding weights when present.
void append_params(ConvLayer& layer, const std::string& prefix, std::vector<ParamView>& out);

// Same structure with every learnable value zeroed.
LinearLayer zeros_like(const LinearLayer& layer);
LayerNorm zeros_like(const LayerNorm& layer);
ConvLayer zeros_like(const ConvLayer& layer);

// grads += g, where grads is a zeros_like copy of the layer.
void accumulate(ConvLayer& grads, const ConvGradients& g);

// Mixes a seed with a stream id (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pne
