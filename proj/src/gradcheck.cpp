#include "pne/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "pne/datagen.hpp"
#include "pne/errors.hpp"
#include "pne/training.hpp"

namespace pne {

Fault parse_fault(std::string_view name) {
  if (name.empty() || name == "none") return Fault::None;
  if (name == "gaussian-jacobian") return Fault::GaussianJacobian;
  throw ParameterError("unknown fault '" + std::string(name) + "'");
}

bool GradcheckReport::passed() const {
  return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.passed; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& c : components)
    if (!c.passed) out.push_back(c.name);
  return out;
}

namespace {

using Rng = std::mt19937_64;
constexpr double kMargin = 1e-3;
constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
double gaussian(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

std::size_t pick(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

Vec3 random_in_ball(Rng& rng, double radius) {
  while (true) {
    const Vec3 p{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
    if (squared_norm(p) <= 1.0) return radius * p;
  }
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = gaussian(rng);
  return m;
}

struct Tracker {
  ComponentResult result;

  Tracker(std::string name, double tol) {
    result.name = std::move(name);
    result.tolerance = tol;
  }

  void compare(double analytic, double numeric) {
    const double err = std::isfinite(analytic) && std::isfinite(numeric) ? relative_error(analytic, numeric) : kInf;
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  void exact_zero(double analytic) {
    if (analytic != 0.0) result.max_rel_error = kInf;
  }
  void probe() { ++result.probes; }

  ComponentResult finish(std::string note = {}) {
    result.passed = result.max_rel_error < result.tolerance;
    result.note = std::move(note);
    return result;
  }
};

// Central difference of loss() in the scalar x, restoring x afterwards.
double central(const std::function<double()>& loss, double& x, double h) {
  const double saved = x;
  x = saved + h;
  const double plus = loss();
  x = saved - h;
  const double minus = loss();
  x = saved;
  return (plus - minus) / (2.0 * h);
}

Embedding make_check_embedding(const std::string& label, Rng& rng) {
  const EmbeddingSpec spec = parse_embedding_label(label);
  switch (spec.kind) {
    case EmbeddingKind::KernelPoint: {
      const KernelLayout layout = default_kernel_layout(BallQueryNeighborhood{1.0});
      return {KernelPointEmbedding{icosahedron_kernel_points(layout.shell_radius), layout.sigma, spec.correlation}};
    }
    case EmbeddingKind::Mlp: {
      MlpEmbedding mlp = init_mlp_embedding(8, 1.0, spec.activation, rng());
      for (double& b : mlp.biases) b = uniform(rng, -0.5, 0.5);
      return {mlp};
    }
    case EmbeddingKind::Identity:
      return {IdentityEmbedding{}};
  }
  return {IdentityEmbedding{}};
}

// True when p lies within kMargin of a point where the embedding is not differentiable.
bool near_kink(const Embedding& e, const Vec3& p) {
  if (const auto* kp = std::get_if<KernelPointEmbedding>(&e.value)) {
    if (kp->correlation != CorrelationKind::Triangular) return false;
    for (const Vec3& k : kp->kernel_points) {
      const double d = norm(p - k);
      if (d < kMargin || std::abs(d - kp->sigma) < kMargin) return true;
    }
    return false;
  }
  if (const auto* mlp = std::get_if<MlpEmbedding>(&e.value)) {
    if (mlp->activation != ActivationKind::ReLU) return false;
    for (std::size_t r = 0; r < mlp->weights.rows(); ++r) {
      const auto w = mlp->weights.row(r);
      const double z = w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + mlp->biases[r];
      if (std::abs(z) < kMargin) return true;
    }
  }
  return false;
}

bool is_box(const Embedding& e) {
  const auto* kp = std::get_if<KernelPointEmbedding>(&e.value);
  return kp != nullptr && kp->correlation == CorrelationKind::Box;
}

bool is_gaussian(const Embedding& e) {
  const auto* kp = std::get_if<KernelPointEmbedding>(&e.value);
  return kp != nullptr && kp->correlation == CorrelationKind::Gaussian;
}

}  // namespace

ComponentResult check_activation(ActivationKind kind, const GradcheckOptions& opts) {
  Tracker t("activation-" + std::string(to_string(kind)), opts.tolerance);
  Rng rng(derive_seed(opts.seed, 10 + static_cast<std::uint64_t>(kind)));
  while (t.result.probes < opts.probes) {
    double x = uniform(rng, -5.0, 5.0);
    if (kind == ActivationKind::ReLU && std::abs(x) < kMargin) continue;
    const double analytic = activation_derivative(kind, x);
    const double numeric = central([&] { return activation_forward(kind, x); }, x, opts.h);
    t.compare(analytic, numeric);
    t.probe();
  }
  return t.finish();
}

ComponentResult check_embedding_offsets(const std::string& label, const GradcheckOptions& opts) {
  Tracker t("embedding-" + label, opts.tolerance);
  Rng rng(derive_seed(opts.seed, 100 + std::hash<std::string>{}(label) % 1000));
  Embedding e = make_check_embedding(label, rng);
  const std::size_t dim = e.raw_dim();
  const bool box = is_box(e);
  while (t.result.probes < opts.probes) {
    if (t.result.probes % 100 == 0 && e.has_parameters()) e = make_check_embedding(label, rng);
    const Vec3 p = random_in_ball(rng, 1.2);
    if (near_kink(e, p)) continue;
    Tensor3 jac = embed_jacobian_offsets(e, std::span<const Vec3>(&p, 1));
    if (opts.fault == Fault::GaussianJacobian && is_gaussian(e)) {
      for (double& v : jac.values()) v = -v;
    }
    if (box) {
      for (double v : jac.values()) t.exact_zero(v);
    } else {
      const Matrix fd = finite_diff_jacobian(
          [&](std::span<const double> x) {
            std::vector<double> out(dim);
            embed_one(e, Vec3{x[0], x[1], x[2]}, out);
            return out;
          },
          std::span<const double>(p.data(), 3), opts.h);
      for (std::size_t j = 0; j < dim; ++j)
        for (std::size_t a = 0; a < 3; ++a) t.compare(jac.fiber(0, j)[a], fd(j, a));
    }
    t.probe();
  }
  return t.finish(box ? "offset gradient required to be exactly zero" : "");
}

ComponentResult check_embedding_params(ActivationKind kind, const GradcheckOptions& opts) {
  const std::string label = "mlp-" + std::string(to_string(kind));
  Tracker t("embedding-params-" + label, opts.tolerance);
  Rng rng(derive_seed(opts.seed, 200 + static_cast<std::uint64_t>(kind)));
  while (t.result.probes < opts.probes) {
    Embedding e = make_check_embedding(label, rng);
    std::vector<Vec3> offsets;
    while (offsets.size() < 4) {
      const Vec3 p = random_in_ball(rng, 1.2);
      if (!near_kink(e, p)) offsets.push_back(p);
    }
    const Matrix up = random_matrix(rng, offsets.size(), e.raw_dim());
    const EmbeddingParamGradients g = embed_gradient_params(e, offsets, up);
    auto& mlp = std::get<MlpEmbedding>(e.value);
    auto loss = [&] {
      const Matrix v = embed(e, offsets);
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += v.values()[i] * up.values()[i];
      return s;
    };
    for (int k = 0; k < 50 && t.result.probes < opts.probes; ++k) {
      const std::size_t nw = mlp.weights.size();
      const std::size_t idx = pick(rng, nw + mlp.biases.size());
      if (idx < nw) {
        t.compare(g.d_weights.values()[idx], central(loss, mlp.weights.values()[idx], opts.h));
      } else {
        t.compare(g.d_biases[idx - nw], central(loss, mlp.biases[idx - nw], opts.h));
      }
      t.probe();
    }
  }
  return t.finish();
}

namespace {

struct ConvInstance {
  ConvLayer layer;
  PointCloud support;
  PointCloud query;  // unused when same_cloud
  bool same_cloud = false;
  NeighborList neighbors;
  Matrix features;
  Matrix upstream;

  const PointCloud& q() const { return same_cloud ? support : query; }
};

PointCloud random_cloud(Rng& rng, std::size_t n) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.positions.push_back({uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)});
  return c;
}

bool instance_near_kink(const ConvInstance& inst) {
  const PointCloud& q = inst.q();
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::uint32_t s : inst.neighbors.neighbors(i)) {
      // a same-cloud self pair stays at offset zero under any perturbation
      if (inst.same_cloud && s == i) continue;
      if (near_kink(inst.layer.embedding, inst.support.positions[s] - q.positions[i])) return true;
    }
  return false;
}

ConvInstance make_conv_instance(const std::string& label, Rng& rng, bool cross) {
  while (true) {
    ConvInstance inst;
    inst.same_cloud = !cross;
    inst.support = random_cloud(rng, 6 + pick(rng, 15));
    if (cross) inst.query = random_cloud(rng, 4 + pick(rng, 9));
    inst.neighbors = sorted_by_index(knn(inst.q(), inst.support, 6));
    const std::size_t in = 1 + pick(rng, 4), out = 1 + pick(rng, 4);
    inst.layer = init_conv_layer(make_check_embedding(label, rng), in, out, 5, rng(), true,
                                 pick(rng, 2) == 0 ? Normalization::Mean : Normalization::Sum);
    for (double& b : *inst.layer.bias) b = gaussian(rng);
    inst.features = random_matrix(rng, inst.support.size(), in);
    inst.upstream = random_matrix(rng, inst.q().size(), out);
    if (!instance_near_kink(inst)) return inst;
  }
}

double conv_loss(const ConvInstance& inst) {
  const Matrix y = conv_forward(inst.layer, inst.q(), inst.support, inst.neighbors, inst.features);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * inst.upstream.values()[i];
  return s;
}

}  // namespace

ComponentResult check_conv(const std::string& label, const GradcheckOptions& opts) {
  Tracker t("conv-" + label, opts.tolerance);
  Rng rng(derive_seed(opts.seed, 300 + std::hash<std::string>{}(label) % 1000));
  bool cross = true;
  const bool box = is_box(make_check_embedding(label, rng));
  while (t.result.probes < opts.probes) {
    ConvInstance inst = make_conv_instance(label, rng, cross);
    cross = !cross;
    ConvGradients g = conv_backward(inst.layer, inst.q(), inst.support, inst.neighbors, inst.features, inst.upstream);
    if (opts.fault == Fault::GaussianJacobian && is_gaussian(inst.layer.embedding)) {
      for (auto& v : g.d_query_positions) v = -1.0 * v;
      for (auto& v : g.d_support_positions) v = -1.0 * v;
    }
    if (box) {
      for (const Vec3& v : g.d_query_positions)
        for (double x : v) t.exact_zero(x);
      for (const Vec3& v : g.d_support_positions)
        for (double x : v) t.exact_zero(x);
    }
    auto loss = [&] { return conv_loss(inst); };
    auto* mlp = std::get_if<MlpEmbedding>(&inst.layer.embedding.value);

    for (int k = 0; k < 50 && t.result.probes < opts.probes; ++k) {
      const std::size_t target = pick(rng, 7);
      switch (target) {
        case 0: {
          const std::size_t i = pick(rng, inst.features.size());
          t.compare(g.d_features.values()[i], central(loss, inst.features.values()[i], opts.h));
          break;
        }
        case 1: {
          const std::size_t i = pick(rng, inst.layer.kernel.size());
          t.compare(g.d_kernel.values()[i], central(loss, inst.layer.kernel.values()[i], opts.h));
          break;
        }
        case 2: {
          const std::size_t i = pick(rng, inst.layer.projection.size());
          t.compare(g.d_projection.values()[i], central(loss, inst.layer.projection.values()[i], opts.h));
          break;
        }
        case 3: {
          const std::size_t i = pick(rng, inst.layer.bias->size());
          t.compare((*g.d_bias)[i], central(loss, (*inst.layer.bias)[i], opts.h));
          break;
        }
        case 4: {
          if (mlp == nullptr) continue;
          const std::size_t nw = mlp->weights.size();
          const std::size_t i = pick(rng, nw + mlp->biases.size());
          if (i < nw) t.compare(g.d_embedding.d_weights.values()[i], central(loss, mlp->weights.values()[i], opts.h));
          else t.compare(g.d_embedding.d_biases[i - nw], central(loss, mlp->biases[i - nw], opts.h));
          break;
        }
        default: {
          // positions: support (5) or query (6); in same-cloud instances both move together
          const bool on_query = target == 6 && !inst.same_cloud;
          PointCloud& cloud = on_query ? inst.query : inst.support;
          const std::size_t i = pick(rng, cloud.size());
          const std::size_t a = pick(rng, 3);
          double analytic = on_query ? g.d_query_positions[i][a] : g.d_support_positions[i][a];
          if (inst.same_cloud) analytic += g.d_query_positions[i][a];
          if (box) {
            t.exact_zero(analytic);
          } else {
            t.compare(analytic, central(loss, cloud.positions[i][a], opts.h));
          }
          break;
        }
      }
      t.probe();
    }
  }
  return t.finish(box ? "position gradients required to be exactly zero" : "");
}

ComponentResult check_linear(const GradcheckOptions& opts) {
  Tracker t("linear", opts.tolerance);
  Rng rng(derive_seed(opts.seed, 400));
  while (t.result.probes < opts.probes) {
    LinearLayer layer = init_linear(3 + pick(rng, 3), 2 + pick(rng, 3), rng());
    for (double& b : layer.bias) b = gaussian(rng);
    Matrix x = random_matrix(rng, 5, layer.in_features());
    const Matrix up = random_matrix(rng, 5, layer.out_features());
    LinearLayer grads = zeros_like(layer);
    const Matrix dx = linear_backward(layer, x, up, grads);
    auto loss = [&] {
      const Matrix y = linear_forward(layer, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * up.values()[i];
      return s;
    };
    for (int k = 0; k < 30 && t.result.probes < opts.probes; ++k) {
      switch (pick(rng, 3)) {
        case 0: {
          const std::size_t i = pick(rng, x.size());
          t.compare(dx.values()[i], central(loss, x.values()[i], opts.h));
          break;
        }
        case 1: {
          const std::size_t i = pick(rng, layer.weights.size());
          t.compare(grads.weights.values()[i], central(loss, layer.weights.values()[i], opts.h));
          break;
        }
        default: {
          const std::size_t i = pick(rng, layer.bias.size());
          t.compare(grads.bias[i], central(loss, layer.bias[i], opts.h));
        }
      }
      t.probe();
    }
  }
  return t.finish();
}

ComponentResult check_layer_norm(const GradcheckOptions& opts) {
  Tracker t("layer-norm", opts.tolerance);
  Rng rng(derive_seed(opts.seed, 500));
  while (t.result.probes < opts.probes) {
    const std::size_t w = 2 + pick(rng, 6);
    LayerNorm norm = init_layer_norm(w);
    for (double& v : norm.scale) v = uniform(rng, 0.5, 1.5);
    for (double& v : norm.shift) v = gaussian(rng);
    Matrix x = random_matrix(rng, 4, w);
    const Matrix up = random_matrix(rng, 4, w);
    LayerNormCache cache;
    layer_norm_forward(norm, x, cache);
    LayerNorm grads = zeros_like(norm);
    const Matrix dx = layer_norm_backward(norm, cache, up, grads);
    auto loss = [&] {
      LayerNormCache c;
      const Matrix y = layer_norm_forward(norm, x, c);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * up.values()[i];
      return s;
    };
    for (int k = 0; k < 30 && t.result.probes < opts.probes; ++k) {
      switch (pick(rng, 3)) {
        case 0: {
          const std::size_t i = pick(rng, x.size());
          t.compare(dx.values()[i], central(loss, x.values()[i], opts.h));
          break;
        }
        case 1: {
          const std::size_t i = pick(rng, w);
          t.compare(grads.scale[i], central(loss, norm.scale[i], opts.h));
          break;
        }
        default: {
          const std::size_t i = pick(rng, w);
          t.compare(grads.shift[i], central(loss, norm.shift[i], opts.h));
        }
      }
      t.probe();
    }
  }
  return t.finish();
}

ComponentResult check_block(const GradcheckOptions& opts) {
  Tracker t("metaformer-block", opts.tolerance);
  Rng rng(derive_seed(opts.seed, 600));
  while (t.result.probes < opts.probes) {
    const std::size_t w = 2 + pick(rng, 3);
    PointCloud cloud = random_cloud(rng, 10 + pick(rng, 6));
    const NeighborList nl = sorted_by_index(knn(cloud, cloud, 5));
    MetaformerBlock block{init_layer_norm(w),
                          init_conv_layer(make_check_embedding("kp-gaussian", rng), w, w, 5, rng(), true),
                          init_layer_norm(w), init_linear(w, 2 * w, rng()), init_linear(2 * w, w, rng()), 0.0};
    for (double& v : block.norm1.shift) v = 0.3 * gaussian(rng);
    for (double& v : block.norm2.scale) v = uniform(rng, 0.5, 1.5);
    Matrix x = random_matrix(rng, cloud.size(), w);
    const Matrix up = random_matrix(rng, cloud.size(), w);
    Rng unused(0);
    BlockCache cache;
    block_forward(block, cloud, nl, x, false, unused, &cache);
    MetaformerBlock grads{zeros_like(block.norm1), zeros_like(block.mixer), zeros_like(block.norm2),
                          zeros_like(block.fc1), zeros_like(block.fc2), 0.0};
    const Matrix dx = block_backward(block, cloud, nl, cache, up, grads);
    auto loss = [&] {
      const Matrix y = block_forward(block, cloud, nl, x, false, unused);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * up.values()[i];
      return s;
    };
    std::vector<ParamView> pv, gv;
    append_params(block.norm1, "norm1", pv);
    append_params(block.mixer, "mixer", pv);
    append_params(block.norm2, "norm2", pv);
    append_params(block.fc1, "fc1", pv);
    append_params(block.fc2, "fc2", pv);
    append_params(grads.norm1, "norm1", gv);
    append_params(grads.mixer, "mixer", gv);
    append_params(grads.norm2, "norm2", gv);
    append_params(grads.fc1, "fc1", gv);
    append_params(grads.fc2, "fc2", gv);
    for (int k = 0; k < 40 && t.result.probes < opts.probes; ++k) {
      const std::size_t which = pick(rng, pv.size() + 1);
      if (which == pv.size()) {
        const std::size_t i = pick(rng, x.size());
        t.compare(dx.values()[i], central(loss, x.values()[i], opts.h));
      } else {
        const std::size_t i = pick(rng, pv[which].values.size());
        t.compare(gv[which].values[i], central(loss, pv[which].values[i], opts.h));
      }
      t.probe();
    }
  }
  return t.finish();
}

ComponentResult check_cross_entropy(const GradcheckOptions& opts) {
  Tracker t("cross-entropy", std::min(opts.tolerance, 1e-6));
  Rng rng(derive_seed(opts.seed, 700));
  while (t.result.probes < opts.probes) {
    const std::size_t rows = 1 + pick(rng, 4), classes = 2 + pick(rng, 5);
    Matrix logits = random_matrix(rng, rows, classes);
    for (double& v : logits.values()) v *= 3.0;
    std::vector<int> labels(rows);
    for (int& l : labels) l = static_cast<int>(pick(rng, classes));
    const LossResult r = cross_entropy(logits, labels);
    auto loss = [&] { return cross_entropy(logits, labels).loss; };
    for (std::size_t i = 0; i < logits.size() && t.result.probes < opts.probes; ++i) {
      t.compare(r.d_logits.values()[i], central(loss, logits.values()[i], opts.h));
      t.probe();
    }
  }
  return t.finish();
}

ComponentResult check_network(Task task, const GradcheckOptions& opts) {
  Tracker t(std::string("network-") + std::string(to_string(task)), opts.network_tolerance);
  NetworkConfig config;
  config.task = task;
  config.num_classes = 3;
  EncoderConfig& enc = config.encoder;
  enc.num_levels = 2;
  enc.widths = {4, 8};
  enc.blocks_per_level = {1, 1};
  enc.initial_cell = 0.3;
  enc.common_dim = 4;
  enc.conv_bias = true;
  enc.embedding = parse_embedding_label("kp-gaussian");

  Rng rng(derive_seed(opts.seed, 800 + static_cast<std::uint64_t>(task)));
  PointCloud cloud = sample_shape(ShapeKind::Torus, 48, 0.02, rng());
  std::vector<int> labels(cloud.size());
  for (int& l : labels) l = static_cast<int>(pick(rng, 3));
  cloud.labels = labels;
  const Pyramid pyramid = build_pyramid(enc, cloud, task == Task::Segmentation);
  NetworkParams params = init_network(config, rng());
  // non-zero starting points for parameters that initialize to constants
  for (auto& v : parameters(params)) {
    if (v.name.ends_with(".bias") || v.name.ends_with(".shift")) {
      for (double& x : v.values) x = 0.1 * gaussian(rng);
    }
  }

  auto loss_and_grad = [&](NetworkParams* grads) {
    Rng unused(0);
    NetworkActivations act;
    const Matrix logits = network_forward(config, params, pyramid, false, unused, &act);
    std::vector<int> truth;
    if (task == Task::Classification) truth = {1};
    else truth = *act.pyramid.levels[0].labels;
    LossResult r = cross_entropy(logits, truth);
    if (grads != nullptr) network_backward(config, params, act, r.d_logits, *grads);
    return r.loss;
  };

  NetworkParams grads = zeros_like(params);
  loss_and_grad(&grads);
  const auto pv = parameters(params);
  const auto gv = parameters(grads);
  auto loss = [&] { return loss_and_grad(nullptr); };
  for (std::size_t k = 0; k < pv.size(); ++k) {
    for (std::size_t i = 0; i < pv[k].values.size(); ++i) {
      t.compare(gv[k].values[i], central(loss, pv[k].values[i], opts.h));
      t.probe();
    }
  }
  return t.finish(std::to_string(pyramid.levels[0].size()) + " level-0 points, every parameter coordinate");
}

GradcheckReport run_gradcheck(const GradcheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  auto& c = report.components;
  for (auto k : {ActivationKind::ReLU, ActivationKind::GELU, ActivationKind::Sin}) c.push_back(check_activation(k, opts));
  std::vector<std::string> labels;
  for (const auto& spec : all_embedding_variants()) labels.push_back(spec.label());
  for (const auto& l : labels) c.push_back(check_embedding_offsets(l, opts));
  for (auto k : {ActivationKind::ReLU, ActivationKind::GELU, ActivationKind::Sin}) {
    c.push_back(check_embedding_params(k, opts));
  }
  for (const auto& l : labels) c.push_back(check_conv(l, opts));
  c.push_back(check_linear(opts));
  c.push_back(check_layer_norm(opts));
  c.push_back(check_block(opts));
  c.push_back(check_cross_entropy(opts));
  c.push_back(check_network(Task::Classification, opts));
  c.push_back(check_network(Task::Segmentation, opts));
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace pne
