#include "pne/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "pne/errors.hpp"

namespace pne {

std::string_view to_string(CorrelationKind kind) {
  switch (kind) {
    case CorrelationKind::Box: return "box";
    case CorrelationKind::Triangular: return "triangular";
    case CorrelationKind::Gaussian: return "gaussian";
  }
  return "?";
}

CorrelationKind parse_correlation(std::string_view name) {
  if (name == "box") return CorrelationKind::Box;
  if (name == "triangular") return CorrelationKind::Triangular;
  if (name == "gaussian") return CorrelationKind::Gaussian;
  throw ParameterError("unknown correlation '" + std::string(name) + "'");
}

std::size_t Embedding::raw_dim() const {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, KernelPointEmbedding>) return v.kernel_points.size();
        else if constexpr (std::is_same_v<T, MlpEmbedding>) return v.weights.rows();
        else return 3;
      },
      value);
}

std::string Embedding::name() const {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, KernelPointEmbedding>) return "kp-" + std::string(to_string(v.correlation));
        else if constexpr (std::is_same_v<T, MlpEmbedding>) return "mlp-" + std::string(to_string(v.activation));
        else return "none";
      },
      value);
}

void validate(const Embedding& e) {
  if (const auto* kp = std::get_if<KernelPointEmbedding>(&e.value)) {
    if (kp->kernel_points.empty()) throw ParameterError("kernel-point embedding needs at least one point");
    if (kp->correlation != CorrelationKind::Box && !(kp->sigma > 0.0 && std::isfinite(kp->sigma))) {
      throw ParameterError("sigma must be finite and positive");
    }
    for (std::size_t i = 0; i < kp->kernel_points.size(); ++i)
      for (std::size_t j = i + 1; j < kp->kernel_points.size(); ++j)
        if (kp->kernel_points[i] == kp->kernel_points[j]) throw ParameterError("kernel points must be distinct");
  } else if (const auto* mlp = std::get_if<MlpEmbedding>(&e.value)) {
    if (mlp->weights.rows() == 0 || mlp->weights.cols() != 3) throw DimensionError("MLP weights must be E x 3");
    if (mlp->biases.size() != mlp->weights.rows()) throw DimensionError("MLP bias length must equal E");
    if (!mlp->weights.all_finite()) throw ParameterError("MLP weights must be finite");
    for (double b : mlp->biases)
      if (!std::isfinite(b)) throw ParameterError("MLP biases must be finite");
  }
}

std::vector<Vec3> icosahedron_kernel_points(double shell_radius) {
  if (!(shell_radius > 0.0) || !std::isfinite(shell_radius)) throw ParameterError("shell radius must be positive");
  const double phi = std::numbers::phi;
  const double s = shell_radius / std::sqrt(1.0 + phi * phi);
  const double signs[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  std::vector<Vec3> pts;
  pts.reserve(13);
  for (const auto& sg : signs) pts.push_back({0.0, s * sg[0], s * sg[1] * phi});
  for (const auto& sg : signs) pts.push_back({s * sg[0], s * sg[1] * phi, 0.0});
  for (const auto& sg : signs) pts.push_back({s * sg[0] * phi, 0.0, s * sg[1]});
  pts.push_back({0.0, 0.0, 0.0});
  return pts;
}

std::vector<Vec3> grid_kernel_points(std::size_t m, double extent) {
  if (m == 0) throw ParameterError("grid needs at least one point per axis");
  if (!(extent > 0.0) || !std::isfinite(extent)) throw ParameterError("grid extent must be positive");
  const double step = 2.0 * extent / static_cast<double>(m);
  auto center = [&](std::size_t i) { return -extent + (static_cast<double>(i) + 0.5) * step; };
  std::vector<Vec3> pts;
  pts.reserve(m * m * m);
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = 0; y < m; ++y)
      for (std::size_t z = 0; z < m; ++z) pts.push_back({center(x), center(y), center(z)});
  return pts;
}

double min_pairwise_distance(std::span<const Vec3> points, std::size_t count) {
  count = std::min(count, points.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) best = std::min(best, norm(points[i] - points[j]));
  return best;
}

namespace {

void require_finite(const Vec3& p) {
  if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
    throw DomainError("embedding offset is not finite");
  }
}

void embed_kernel_points(const KernelPointEmbedding& kp, const Vec3& p, std::span<double> out) {
  const std::size_t k = kp.kernel_points.size();
  switch (kp.correlation) {
    case CorrelationKind::Box: {
      std::size_t best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        const double d2 = squared_norm(kp.kernel_points[j] - p);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = j;
        }
      }
      std::fill(out.begin(), out.end(), 0.0);
      out[best] = 1.0;
      break;
    }
    case CorrelationKind::Triangular: {
      for (std::size_t j = 0; j < k; ++j) {
        const double d = norm(kp.kernel_points[j] - p);
        out[j] = std::max(1.0 - d / kp.sigma, 0.0);
      }
      break;
    }
    case CorrelationKind::Gaussian: {
      const double inv = 1.0 / (2.0 * kp.sigma * kp.sigma);
      for (std::size_t j = 0; j < k; ++j) out[j] = std::exp(-squared_norm(kp.kernel_points[j] - p) * inv);
      break;
    }
  }
}

double mlp_preactivation(const MlpEmbedding& mlp, std::size_t row, const Vec3& p) {
  const auto w = mlp.weights.row(row);
  return w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + mlp.biases[row];
}

double mlp_scale(const MlpEmbedding& mlp) {
  return mlp.activation == ActivationKind::Sin ? mlp.frequency_scale : 1.0;
}

}  // namespace

void embed_one(const Embedding& e, const Vec3& p, std::span<double> out) {
  require_finite(p);
  if (out.size() != e.raw_dim()) throw DimensionError("embedding output buffer has the wrong length");
  if (const auto* kp = std::get_if<KernelPointEmbedding>(&e.value)) {
    embed_kernel_points(*kp, p, out);
  } else if (const auto* mlp = std::get_if<MlpEmbedding>(&e.value)) {
    const double scale = mlp_scale(*mlp);
    for (std::size_t r = 0; r < out.size(); ++r) {
      out[r] = activation_forward(mlp->activation, scale * mlp_preactivation(*mlp, r, p));
    }
  } else {
    out[0] = p[0];
    out[1] = p[1];
    out[2] = p[2];
  }
}

Matrix embed(const Embedding& e, std::span<const Vec3> offsets) {
  Matrix out(offsets.size(), e.raw_dim());
  for (std::size_t n = 0; n < offsets.size(); ++n) embed_one(e, offsets[n], out.row(n));
  return out;
}

Tensor3 embed_jacobian_offsets(const Embedding& e, std::span<const Vec3> offsets) {
  const std::size_t dim = e.raw_dim();
  Tensor3 jac(offsets.size(), dim, 3);
  std::vector<double> upstream(dim, 0.0);
  for (std::size_t n = 0; n < offsets.size(); ++n) {
    require_finite(offsets[n]);
    for (std::size_t r = 0; r < dim; ++r) {
      upstream[r] = 1.0;
      Vec3 g{0.0, 0.0, 0.0};
      embed_backward_one(e, offsets[n], upstream, nullptr, &g);
      upstream[r] = 0.0;
      for (int a = 0; a < 3; ++a) jac(n, r, static_cast<std::size_t>(a)) = g[a];
    }
  }
  return jac;
}

EmbeddingParamGradients zero_param_gradients(const Embedding& e) {
  EmbeddingParamGradients g;
  if (const auto* mlp = std::get_if<MlpEmbedding>(&e.value)) {
    g.d_weights = Matrix(mlp->weights.rows(), 3);
    g.d_biases.assign(mlp->biases.size(), 0.0);
  }
  return g;
}

void embed_backward_one(const Embedding& e, const Vec3& p, std::span<const double> upstream,
                        EmbeddingParamGradients* params, Vec3* d_offset) {
  if (upstream.size() != e.raw_dim()) throw DimensionError("embedding upstream gradient has the wrong length");
  if (const auto* kp = std::get_if<KernelPointEmbedding>(&e.value)) {
    if (d_offset == nullptr || kp->correlation == CorrelationKind::Box) return;
    Vec3& g = *d_offset;
    for (std::size_t j = 0; j < kp->kernel_points.size(); ++j) {
      if (upstream[j] == 0.0) continue;
      const Vec3 diff = p - kp->kernel_points[j];  // p - k_j
      if (kp->correlation == CorrelationKind::Gaussian) {
        const double ej = std::exp(-squared_norm(diff) / (2.0 * kp->sigma * kp->sigma));
        const double c = -upstream[j] * ej / (kp->sigma * kp->sigma);
        g = g + c * diff;
      } else {
        const double d = norm(diff);
        if (d > 0.0 && d < kp->sigma) g = g + (-upstream[j] / (kp->sigma * d)) * diff;
      }
    }
  } else if (const auto* mlp = std::get_if<MlpEmbedding>(&e.value)) {
    const double scale = mlp_scale(*mlp);
    for (std::size_t r = 0; r < mlp->weights.rows(); ++r) {
      if (upstream[r] == 0.0) continue;
      const double z = mlp_preactivation(*mlp, r, p);
      const double dz = upstream[r] * activation_derivative(mlp->activation, scale * z) * scale;
      if (dz == 0.0) continue;
      const auto w = mlp->weights.row(r);
      if (d_offset != nullptr) {
        (*d_offset)[0] += dz * w[0];
        (*d_offset)[1] += dz * w[1];
        (*d_offset)[2] += dz * w[2];
      }
      if (params != nullptr) {
        auto dw = params->d_weights.row(r);
        dw[0] += dz * p[0];
        dw[1] += dz * p[1];
        dw[2] += dz * p[2];
        params->d_biases[r] += dz;
      }
    }
  } else if (d_offset != nullptr) {
    (*d_offset)[0] += upstream[0];
    (*d_offset)[1] += upstream[1];
    (*d_offset)[2] += upstream[2];
  }
}

EmbeddingParamGradients embed_gradient_params(const Embedding& e, std::span<const Vec3> offsets,
                                              const Matrix& upstream) {
  if (upstream.rows() != offsets.size() || upstream.cols() != e.raw_dim()) {
    throw DimensionError("upstream gradient must be N x raw_dim");
  }
  EmbeddingParamGradients g = zero_param_gradients(e);
  if (!e.has_parameters()) return g;
  for (std::size_t n = 0; n < offsets.size(); ++n) {
    require_finite(offsets[n]);
    embed_backward_one(e, offsets[n], upstream.row(n), &g, nullptr);
  }
  return g;
}

KernelLayout default_kernel_layout(const NeighborhoodScale& neighborhood, double sigma_factor) {
  if (!(sigma_factor > 0.0)) throw ParameterError("sigma factor must be positive");
  const double shell = std::visit(
      [](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, BallQueryNeighborhood>) {
          if (!(n.radius > 0.0)) throw ParameterError("ball query radius must be positive");
          return 0.6 * n.radius;
        } else {
          if (!(n.average_distance > 0.0)) throw ParameterError("average neighbor distance must be positive");
          return 1.2 * n.average_distance;
        }
      },
      neighborhood);
  const auto pts = icosahedron_kernel_points(shell);
  return {shell, sigma_factor * min_pairwise_distance(pts, 12)};
}

MlpEmbedding init_mlp_embedding(std::size_t dim, double neighborhood_radius, ActivationKind activation,
                                std::uint64_t seed) {
  if (dim == 0) throw ParameterError("MLP embedding dimension must be >= 1");
  if (!(neighborhood_radius > 0.0)) throw ParameterError("neighborhood radius must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0 / neighborhood_radius, 1.0 / neighborhood_radius);
  MlpEmbedding mlp;
  mlp.weights = Matrix(dim, 3);
  for (double& w : mlp.weights.values()) w = uni(rng);
  mlp.biases.assign(dim, 0.0);
  mlp.activation = activation;
  mlp.frequency_scale = activation == ActivationKind::Sin ? std::numbers::pi : 1.0;
  return mlp;
}

}  // namespace pne
