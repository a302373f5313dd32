#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pne/geometry.hpp"
#include "pne/numerics.hpp"

namespace pne {

enum class CorrelationKind { Box, Triangular, Gaussian };

std::string_view to_string(CorrelationKind kind);
CorrelationKind parse_correlation(std::string_view name);

// Correlation of an offset with a fixed set of kernel points. Box ignores sigma.
struct KernelPointEmbedding {
  std::vector<Vec3> kernel_points;
  double sigma = 1.0;
  CorrelationKind correlation = CorrelationKind::Gaussian;
};

// Single-layer perceptron act(W p + b); Sin evaluates sin(w0 (W p + b)).
struct MlpEmbedding {
  Matrix weights;  // E x 3
  std::vector<double> biases;
  ActivationKind activation = ActivationKind::GELU;
  double frequency_scale = 1.0;
};

// The raw offset is the embedding.
struct IdentityEmbedding {};

struct Embedding {
  std::variant<KernelPointEmbedding, MlpEmbedding, IdentityEmbedding> value;

  std::size_t raw_dim() const;
  bool has_parameters() const { return std::holds_alternative<MlpEmbedding>(value); }
  // Short label such as "kp-gaussian", "mlp-sin" or "none".
  std::string name() const;
};

// Throws ParameterError when the variant breaks its invariants.
void validate(const Embedding& e);

// 12 icosahedron vertices at shell_radius followed by the origin. Vertices
// are the cyclic permutations of (0, +-1, +-phi) in the order
// (0,+-1,+-phi), (+-1,+-phi,0), (+-phi,0,+-1), signs enumerated (+,+), (+,-),
// (-,+), (-,-).
std::vector<Vec3> icosahedron_kernel_points(double shell_radius);

// Centers of an m x m x m lattice over [-extent, extent]^3, x-major then y then z.
std::vector<Vec3> grid_kernel_points(std::size_t m, double extent);

// Smallest distance between two of the first `count` kernel points.
double min_pairwise_distance(std::span<const Vec3> points, std::size_t count);

// Embedding of one offset written into out (length raw_dim).
void embed_one(const Embedding& e, const Vec3& offset, std::span<double> out);

// N x raw_dim embedding matrix.
Matrix embed(const Embedding& e, std::span<const Vec3> offsets);

// N x raw_dim x 3 Jacobian de/dp. Box is identically zero; Triangular is 0
// at its kinks and apex.
Tensor3 embed_jacobian_offsets(const Embedding& e, std::span<const Vec3> offsets);

// Gradients for the learnable MLP parameters; empty for the other variants.
struct EmbeddingParamGradients {
  Matrix d_weights;
  std::vector<double> d_biases;
  bool empty() const { return d_weights.empty() && d_biases.empty(); }
};

// Zeroed gradient buffers shaped like e's parameters.
EmbeddingParamGradients zero_param_gradients(const Embedding& e);

// Backward for a single offset: accumulates into params (if non-null) and
// d_offset (if non-null) given upstream dL/de.
void embed_backward_one(const Embedding& e, const Vec3& offset, std::span<const double> upstream,
                        EmbeddingParamGradients* params, Vec3* d_offset);

EmbeddingParamGradients embed_gradient_params(const Embedding& e, std::span<const Vec3> offsets,
                                              const Matrix& upstream);

struct BallQueryNeighborhood {
  double radius;
};
struct KnnNeighborhood {
  double average_distance;
};
using NeighborhoodScale = std::variant<BallQueryNeighborhood, KnnNeighborhood>;

struct KernelLayout {
  double shell_radius;
  double sigma;
};

// Shell at 0.6 r for ball query and 1.2 r' for kNN; sigma is sigma_factor
// times the edge length of the icosahedral shell.
KernelLayout default_kernel_layout(const NeighborhoodScale& neighborhood, double sigma_factor = 1.0);

// W uniform in [-1/radius, 1/radius], b = 0; Sin gets frequency scale pi.
MlpEmbedding init_mlp_embedding(std::size_t dim, double neighborhood_radius, ActivationKind activation,
                                std::uint64_t seed);

}  // namespace pne
