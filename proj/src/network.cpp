#include "pne/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pne/errors.hpp"
#include "pne/simd.hpp"

namespace pne {

std::string_view to_string(Task task) {
  return task == Task::Classification ? "classification" : "segmentation";
}

std::string_view to_string(NeighborhoodKind kind) { return kind == NeighborhoodKind::Knn ? "knn" : "ball"; }

std::string EmbeddingSpec::family() const {
  switch (kind) {
    case EmbeddingKind::KernelPoint: return "kp";
    case EmbeddingKind::Mlp: return "mlp";
    case EmbeddingKind::Identity: return "none";
  }
  return "?";
}

std::string EmbeddingSpec::variant() const {
  switch (kind) {
    case EmbeddingKind::KernelPoint: return std::string(to_string(correlation));
    case EmbeddingKind::Mlp: return std::string(to_string(activation));
    case EmbeddingKind::Identity: return "";
  }
  return "";
}

std::string EmbeddingSpec::label() const {
  return kind == EmbeddingKind::Identity ? family() : family() + "-" + variant();
}

EmbeddingSpec parse_embedding_label(std::string_view label) {
  EmbeddingSpec spec;
  if (label == "none") {
    spec.kind = EmbeddingKind::Identity;
    return spec;
  }
  const auto dash = label.find('-');
  if (dash == std::string_view::npos) throw ParameterError("embedding label '" + std::string(label) + "' lacks a variant");
  const auto family = label.substr(0, dash);
  const auto variant = label.substr(dash + 1);
  if (family == "kp") {
    spec.kind = EmbeddingKind::KernelPoint;
    spec.correlation = parse_correlation(variant);
  } else if (family == "mlp") {
    spec.kind = EmbeddingKind::Mlp;
    spec.activation = parse_activation(variant);
  } else {
    throw ParameterError("unknown embedding family '" + std::string(family) + "'");
  }
  return spec;
}

std::vector<EmbeddingSpec> all_embedding_variants() {
  std::vector<EmbeddingSpec> out;
  for (auto c : {CorrelationKind::Box, CorrelationKind::Triangular, CorrelationKind::Gaussian}) {
    EmbeddingSpec s;
    s.kind = EmbeddingKind::KernelPoint;
    s.correlation = c;
    out.push_back(s);
  }
  for (auto a : {ActivationKind::ReLU, ActivationKind::GELU, ActivationKind::Sin}) {
    EmbeddingSpec s;
    s.kind = EmbeddingKind::Mlp;
    s.activation = a;
    out.push_back(s);
  }
  EmbeddingSpec none;
  none.kind = EmbeddingKind::Identity;
  out.push_back(none);
  return out;
}

double EncoderConfig::cell_size(std::size_t level) const { return initial_cell * std::ldexp(1.0, static_cast<int>(level)); }

void validate(const EncoderConfig& config) {
  if (!(config.initial_cell > 0.0)) throw ParameterError("initial cell size must be positive");
  if (config.num_levels == 0) throw ParameterError("encoder needs at least one level");
  if (config.widths.size() != config.num_levels || config.blocks_per_level.size() != config.num_levels) {
    throw DimensionError("widths and blocks_per_level must have num_levels entries");
  }
  for (std::size_t w : config.widths)
    if (w == 0) throw ParameterError("level widths must be >= 1");
  if (config.common_dim == 0 || config.in_features == 0) throw ParameterError("dimensions must be >= 1");
  if (!(config.max_drop_path >= 0.0 && config.max_drop_path < 1.0)) {
    throw ParameterError("drop path rate must lie in [0, 1)");
  }
  if (config.neighborhood.kind == NeighborhoodKind::Knn && config.neighborhood.k == 0) {
    throw ParameterError("kNN needs k >= 1");
  }
  if (config.neighborhood.kind == NeighborhoodKind::BallQuery && !(config.neighborhood.scale > 0.0)) {
    throw ParameterError("ball query scale must be positive");
  }
}

// ---------------------------------------------------------------------------
// Geometry

Matrix default_input_features(const PointCloud& cloud) {
  Matrix f(cloud.size(), 2);
  if (cloud.empty()) return f;
  double zmin = cloud.positions.front()[2];
  for (const auto& p : cloud.positions) zmin = std::min(zmin, p[2]);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    f(i, 0) = 1.0;
    f(i, 1) = cloud.positions[i][2] - zmin;
  }
  return f;
}

NeighborList select_neighbors(const NeighborhoodSpec& spec, const PointCloud& query, const PointCloud& support,
                              double support_cell) {
  if (spec.kind == NeighborhoodKind::Knn) return sorted_by_index(knn(query, support, spec.k));
  return ball_query(query, support, spec.scale * support_cell);
}

Pyramid build_pyramid(const EncoderConfig& config, const PointCloud& input, bool with_decoder_lists) {
  validate(config);
  if (input.empty()) throw DegenerateInputError("level 0 has no points: input cloud is empty");
  PointCloud source = input;
  if (!source.features) {
    if (config.in_features != 2) throw DimensionError("cloud has no features and in_features != 2");
    source.features = default_input_features(source);
  } else if (source.features->cols() != config.in_features) {
    throw DimensionError("input feature width does not match in_features");
  }

  Pyramid pyr;
  const std::size_t levels = config.num_levels;
  for (std::size_t l = 0; l < levels; ++l) {
    PointCloud cloud = cell_average_subsample(source, config.cell_size(l), config.grid_origin).cloud;
    if (cloud.empty()) throw DegenerateInputError("level " + std::to_string(l) + " has no points");
    if (l > 0) cloud.features.reset();
    pyr.levels.push_back(std::move(cloud));
  }
  for (std::size_t l = 0; l < levels; ++l) {
    pyr.same.push_back(select_neighbors(config.neighborhood, pyr.levels[l], pyr.levels[l], config.cell_size(l)));
  }
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    pyr.down.push_back(
        select_neighbors(config.neighborhood, pyr.levels[l + 1], pyr.levels[l], config.cell_size(l)));
  }
  if (with_decoder_lists) {
    for (std::size_t l = 0; l + 1 < levels; ++l) {
      pyr.up.push_back(
          select_neighbors(config.neighborhood, pyr.levels[l], pyr.levels[l + 1], config.cell_size(l + 1)));
    }
    pyr.to_first.emplace_back();
    for (std::size_t l = 1; l < levels; ++l) {
      pyr.to_first.push_back(
          select_neighbors(config.neighborhood, pyr.levels[0], pyr.levels[l], config.cell_size(l)));
    }
  }
  return pyr;
}

std::vector<double> estimate_knn_average_distance(const EncoderConfig& config, const std::vector<PointCloud>& clouds) {
  validate(config);
  std::vector<double> sums(config.num_levels, 0.0);
  std::vector<std::size_t> counts(config.num_levels, 0);
  for (const auto& input : clouds) {
    for (std::size_t l = 0; l < config.num_levels; ++l) {
      const PointCloud level = cell_average_subsample(input, config.cell_size(l), config.grid_origin).cloud;
      const NeighborList nl = knn(level, level, config.neighborhood.k);
      for (std::size_t q = 0; q < nl.num_queries(); ++q) {
        for (std::uint32_t s : nl.neighbors(q)) {
          sums[l] += norm(level.positions[s] - level.positions[q]);
          ++counts[l];
        }
      }
    }
  }
  std::vector<double> out(config.num_levels);
  for (std::size_t l = 0; l < config.num_levels; ++l) {
    if (counts[l] == 0) throw StatisticsError("no kNN pairs at level " + std::to_string(l));
    out[l] = sums[l] / static_cast<double>(counts[l]);
  }
  return out;
}

Embedding make_embedding(const EncoderConfig& config, double support_cell, std::uint64_t seed) {
  const EmbeddingSpec& spec = config.embedding;
  NeighborhoodScale scale;
  double receptive_radius = 0.0;
  if (config.neighborhood.kind == NeighborhoodKind::BallQuery) {
    receptive_radius = config.neighborhood.scale * support_cell;
    scale = BallQueryNeighborhood{receptive_radius};
  } else {
    double avg = support_cell;
    const auto level = static_cast<std::size_t>(std::llround(std::log2(support_cell / config.initial_cell)));
    if (level < config.knn_average_distance.size()) avg = config.knn_average_distance[level];
    scale = KnnNeighborhood{avg};
    receptive_radius = 2.0 * avg;
  }
  switch (spec.kind) {
    case EmbeddingKind::KernelPoint: {
      const KernelLayout layout = default_kernel_layout(scale, spec.sigma_factor);
      KernelPointEmbedding kp;
      kp.kernel_points = spec.placement == KernelPlacement::Icosahedron
                             ? icosahedron_kernel_points(layout.shell_radius)
                             : grid_kernel_points(spec.grid_size, receptive_radius);
      kp.sigma = layout.sigma;
      kp.correlation = spec.correlation;
      return {kp};
    }
    case EmbeddingKind::Mlp:
      return {init_mlp_embedding(spec.mlp_dim, receptive_radius, spec.activation, seed)};
    case EmbeddingKind::Identity:
      return {IdentityEmbedding{}};
  }
  return {IdentityEmbedding{}};
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<ParamView> parameters(NetworkParams& params) {
  std::vector<ParamView> out;
  append_params(params.input, "input", out);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    for (std::size_t b = 0; b < params.blocks[l].size(); ++b) {
      auto& blk = params.blocks[l][b];
      const std::string p = "level" + std::to_string(l) + ".block" + std::to_string(b);
      append_params(blk.norm1, p + ".norm1", out);
      append_params(blk.mixer, p + ".mixer", out);
      append_params(blk.norm2, p + ".norm2", out);
      append_params(blk.fc1, p + ".fc1", out);
      append_params(blk.fc2, p + ".fc2", out);
    }
  }
  for (std::size_t l = 0; l < params.down.size(); ++l) append_params(params.down[l], "down" + std::to_string(l), out);
  if (params.head) append_params(*params.head, "head", out);
  if (params.decoder) {
    auto& d = *params.decoder;
    for (std::size_t l = 0; l < d.skip.size(); ++l) append_params(d.skip[l], "decoder.skip" + std::to_string(l), out);
    for (std::size_t l = 0; l < d.up.size(); ++l) append_params(d.up[l], "decoder.up" + std::to_string(l), out);
    for (std::size_t l = 1; l < d.direct.size(); ++l) {
      append_params(d.direct[l], "decoder.direct" + std::to_string(l), out);
    }
    append_params(d.output, "decoder.output", out);
  }
  return out;
}

NetworkParams zeros_like(const NetworkParams& params) {
  NetworkParams z;
  z.input = zeros_like(params.input);
  for (const auto& level : params.blocks) {
    auto& dst = z.blocks.emplace_back();
    for (const auto& blk : level) {
      dst.push_back({zeros_like(blk.norm1), zeros_like(blk.mixer), zeros_like(blk.norm2), zeros_like(blk.fc1),
                     zeros_like(blk.fc2), blk.drop_path_rate});
    }
  }
  for (const auto& c : params.down) z.down.push_back(zeros_like(c));
  if (params.head) z.head = zeros_like(*params.head);
  if (params.decoder) {
    DecoderParams d;
    for (const auto& s : params.decoder->skip) d.skip.push_back(zeros_like(s));
    for (const auto& c : params.decoder->up) d.up.push_back(zeros_like(c));
    for (const auto& c : params.decoder->direct) d.direct.push_back(zeros_like(c));
    d.output = zeros_like(params.decoder->output);
    z.decoder = std::move(d);
  }
  return z;
}

std::size_t parameter_count(const NetworkParams& params) {
  NetworkParams copy = params;
  std::size_t n = 0;
  for (const auto& v : parameters(copy)) n += v.values.size();
  return n;
}

NetworkParams init_network(const NetworkConfig& config, std::uint64_t seed) {
  const EncoderConfig& enc = config.encoder;
  validate(enc);
  if (config.num_classes < 1) throw ParameterError("num_classes must be >= 1");
  std::uint64_t stream = 0;
  auto next = [&] { return derive_seed(seed, stream++); };
  const std::size_t levels = enc.num_levels;

  NetworkParams p;
  p.input = init_linear(enc.in_features, enc.widths[0], next());

  std::size_t total_blocks = 0;
  for (std::size_t n : enc.blocks_per_level) total_blocks += n;
  std::size_t block_index = 0;
  for (std::size_t l = 0; l < levels; ++l) {
    auto& level = p.blocks.emplace_back();
    const std::size_t w = enc.widths[l];
    for (std::size_t b = 0; b < enc.blocks_per_level[l]; ++b, ++block_index) {
      MetaformerBlock blk;
      blk.norm1 = init_layer_norm(w);
      blk.mixer = init_conv_layer(make_embedding(enc, enc.cell_size(l), next()), w, w, enc.common_dim, next(),
                                  enc.conv_bias, enc.normalize);
      blk.norm2 = init_layer_norm(w);
      blk.fc1 = init_linear(w, 2 * w, next());
      blk.fc2 = init_linear(2 * w, w, next());
      blk.drop_path_rate = total_blocks > 1 ? enc.max_drop_path * static_cast<double>(block_index) /
                                                  static_cast<double>(total_blocks - 1)
                                            : 0.0;
      level.push_back(std::move(blk));
    }
  }
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    p.down.push_back(init_conv_layer(make_embedding(enc, enc.cell_size(l), next()), enc.widths[l],
                                     enc.widths[l + 1], enc.common_dim, next(), enc.conv_bias, enc.normalize));
  }

  if (config.task == Task::Classification) {
    p.head = init_linear(enc.widths.back(), config.num_classes, next());
  } else {
    const std::vector<std::size_t> dw = config.decoder_widths.empty() ? enc.widths : config.decoder_widths;
    if (dw.size() != levels) throw DimensionError("decoder_widths must have num_levels entries");
    DecoderParams d;
    for (std::size_t l = 0; l < levels; ++l) d.skip.push_back(init_linear(enc.widths[l], dw[l], next()));
    for (std::size_t l = 0; l + 1 < levels; ++l) {
      d.up.push_back(init_conv_layer(make_embedding(enc, enc.cell_size(l + 1), next()), dw[l + 1], dw[l],
                                     enc.common_dim, next(), enc.conv_bias, enc.normalize));
    }
    d.direct.push_back(ConvLayer{});
    for (std::size_t l = 1; l < levels; ++l) {
      d.direct.push_back(init_conv_layer(make_embedding(enc, enc.cell_size(l), next()), dw[l], dw[0],
                                         enc.common_dim, next(), enc.conv_bias, enc.normalize));
    }
    d.output = init_linear(dw[0], config.num_classes, next());
    p.decoder = std::move(d);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

void add_scaled(Matrix& dst, const Matrix& src, double scale) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) throw DimensionError("residual shape mismatch");
  simd::active().axpy(scale, src.values().data(), dst.values().data(), dst.size());
}

Matrix scaled(const Matrix& m, double s) {
  Matrix out(m.rows(), m.cols());
  add_scaled(out, m, s);
  return out;
}

double draw_keep(double rate, bool training, std::mt19937_64& rng) {
  if (!training || rate <= 0.0) return 1.0;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  return uni(rng) < rate ? 0.0 : 1.0 / (1.0 - rate);
}

const ConvBackwardOptions kTrainingBackward{false, true};

}  // namespace

Matrix block_forward(const MetaformerBlock& block, const PointCloud& cloud, const NeighborList& neighbors,
                     const Matrix& features, bool training, std::mt19937_64& rng, BlockCache* cache) {
  if (features.cols() != block.mixer.in_features()) {
    throw DimensionError("block width " + std::to_string(block.mixer.in_features()) + " != feature width " +
                         std::to_string(features.cols()));
  }
  BlockCache local;
  BlockCache& c = cache != nullptr ? *cache : local;
  c.input = features;
  c.keep1 = draw_keep(block.drop_path_rate, training, rng);
  c.keep2 = draw_keep(block.drop_path_rate, training, rng);

  Matrix x = features;
  if (c.keep1 != 0.0) {
    c.normed1 = layer_norm_forward(block.norm1, x, c.norm1);
    c.mixed = conv_forward(block.mixer, cloud, cloud, neighbors, c.normed1, &c.conv);
    add_scaled(x, c.mixed, c.keep1);
  }
  c.after_mixer = x;
  if (c.keep2 != 0.0) {
    c.normed2 = layer_norm_forward(block.norm2, x, c.norm2);
    c.hidden_pre = linear_forward(block.fc1, c.normed2);
    c.hidden = gelu(c.hidden_pre);
    add_scaled(x, linear_forward(block.fc2, c.hidden), c.keep2);
  }
  return x;
}

Matrix block_backward(const MetaformerBlock& block, const PointCloud& cloud, const NeighborList& neighbors,
                      const BlockCache& cache, const Matrix& d_out, MetaformerBlock& grads) {
  Matrix d_x = d_out;
  if (cache.keep2 != 0.0) {
    const Matrix d_branch = scaled(d_out, cache.keep2);
    const Matrix d_hidden = linear_backward(block.fc2, cache.hidden, d_branch, grads.fc2);
    const Matrix d_pre = gelu_backward(cache.hidden_pre, d_hidden);
    const Matrix d_normed = linear_backward(block.fc1, cache.normed2, d_pre, grads.fc1);
    add_scaled(d_x, layer_norm_backward(block.norm2, cache.norm2, d_normed, grads.norm2), 1.0);
  }
  Matrix d_in = d_x;
  if (cache.keep1 != 0.0) {
    const Matrix d_branch = scaled(d_x, cache.keep1);
    ConvGradients g = conv_backward(block.mixer, cloud, cloud, neighbors, cache.normed1, d_branch, &cache.conv,
                                    kTrainingBackward);
    accumulate(grads.mixer, g);
    add_scaled(d_in, layer_norm_backward(block.norm1, cache.norm1, g.d_features, grads.norm1), 1.0);
  }
  return d_in;
}

NetworkActivations encoder_forward(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid,
                                   bool training, std::mt19937_64& rng) {
  const std::size_t levels = config.encoder.num_levels;
  if (pyramid.levels.size() != levels) throw DimensionError("pyramid level count != num_levels");
  NetworkActivations act;
  act.pyramid = std::move(pyramid);
  const Pyramid& pyr = act.pyramid;
  for (std::size_t l = 0; l < levels; ++l) {
    if (pyr.levels[l].empty()) throw DegenerateInputError("level " + std::to_string(l) + " has no points");
  }
  if (!pyr.levels[0].features) throw DimensionError("level 0 carries no input features");
  act.initial_features = *pyr.levels[0].features;
  act.level_input.resize(levels);
  act.level_output.resize(levels);
  act.blocks.resize(levels);
  act.down_cache.resize(levels > 0 ? levels - 1 : 0);

  for (std::size_t l = 0; l < levels; ++l) {
    Matrix x = l == 0 ? linear_forward(params.input, act.initial_features)
                      : conv_forward(params.down[l - 1], pyr.levels[l], pyr.levels[l - 1], pyr.down[l - 1],
                                     act.level_output[l - 1], &act.down_cache[l - 1]);
    act.level_input[l] = x;
    act.blocks[l].resize(params.blocks[l].size());
    for (std::size_t b = 0; b < params.blocks[l].size(); ++b) {
      x = block_forward(params.blocks[l][b], pyr.levels[l], pyr.same[l], x, training, rng, &act.blocks[l][b]);
    }
    act.level_output[l] = std::move(x);
  }
  return act;
}

Matrix classify(NetworkActivations& activations, const LinearLayer& head) {
  const Matrix& last = activations.level_output.back();
  if (last.rows() == 0) throw DegenerateInputError("last level has no points");
  Matrix pooled(1, last.cols());
  for (std::size_t n = 0; n < last.rows(); ++n) simd::active().axpy(1.0, last.row(n).data(), pooled.row(0).data(), last.cols());
  for (double& v : pooled.values()) v /= static_cast<double>(last.rows());
  activations.pooled = pooled;
  return linear_forward(head, pooled);
}

Matrix decoder_forward(const NetworkConfig& config, NetworkActivations& act, const DecoderParams& dec) {
  const std::size_t levels = config.encoder.num_levels;
  const Pyramid& pyr = act.pyramid;
  if (pyr.up.size() + 1 != levels || pyr.to_first.size() != levels) {
    throw DimensionError("pyramid lacks decoder neighbor lists");
  }
  act.skip_out.resize(levels);
  act.decoder_maps.resize(levels);
  act.up_cache.resize(levels - 1);
  act.direct_cache.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) act.skip_out[l] = linear_forward(dec.skip[l], act.level_output[l]);
  act.decoder_maps[levels - 1] = act.skip_out[levels - 1];
  for (std::size_t l = levels - 1; l-- > 0;) {
    Matrix m = conv_forward(dec.up[l], pyr.levels[l], pyr.levels[l + 1], pyr.up[l], act.decoder_maps[l + 1],
                            &act.up_cache[l]);
    add_scaled(m, act.skip_out[l], 1.0);
    act.decoder_maps[l] = std::move(m);
  }
  act.summed = act.decoder_maps[0];
  for (std::size_t l = 1; l < levels; ++l) {
    add_scaled(act.summed,
               conv_forward(dec.direct[l], pyr.levels[0], pyr.levels[l], pyr.to_first[l], act.decoder_maps[l],
                            &act.direct_cache[l]),
               1.0);
  }
  return linear_forward(dec.output, act.summed);
}

void network_backward(const NetworkConfig& config, const NetworkParams& params, NetworkActivations& act,
                      const Matrix& d_logits, NetworkParams& grads) {
  const std::size_t levels = config.encoder.num_levels;
  const Pyramid& pyr = act.pyramid;
  std::vector<Matrix> d_level_output(levels);
  for (std::size_t l = 0; l < levels; ++l) d_level_output[l] = Matrix(act.level_output[l].rows(), act.level_output[l].cols());

  if (config.task == Task::Classification) {
    const Matrix d_pooled = linear_backward(*params.head, act.pooled, d_logits, *grads.head);
    Matrix& d_last = d_level_output.back();
    const double inv = 1.0 / static_cast<double>(d_last.rows());
    for (std::size_t n = 0; n < d_last.rows(); ++n) {
      simd::active().axpy(inv, d_pooled.row(0).data(), d_last.row(n).data(), d_last.cols());
    }
  } else {
    const DecoderParams& dec = *params.decoder;
    DecoderParams& gdec = *grads.decoder;
    const Matrix d_summed = linear_backward(dec.output, act.summed, d_logits, gdec.output);
    std::vector<Matrix> d_maps(levels);
    d_maps[0] = d_summed;
    for (std::size_t l = 1; l < levels; ++l) {
      ConvGradients g = conv_backward(dec.direct[l], pyr.levels[0], pyr.levels[l], pyr.to_first[l],
                                      act.decoder_maps[l], d_summed, &act.direct_cache[l], kTrainingBackward);
      accumulate(gdec.direct[l], g);
      d_maps[l] = std::move(g.d_features);
    }
    for (std::size_t l = 0; l < levels; ++l) {
      if (l + 1 < levels) {
        ConvGradients g = conv_backward(dec.up[l], pyr.levels[l], pyr.levels[l + 1], pyr.up[l],
                                        act.decoder_maps[l + 1], d_maps[l], &act.up_cache[l], kTrainingBackward);
        accumulate(gdec.up[l], g);
        add_scaled(d_maps[l + 1], g.d_features, 1.0);
      }
      add_scaled(d_level_output[l], linear_backward(dec.skip[l], act.level_output[l], d_maps[l], gdec.skip[l]), 1.0);
    }
  }

  for (std::size_t l = levels; l-- > 0;) {
    Matrix d_x = d_level_output[l];
    for (std::size_t b = params.blocks[l].size(); b-- > 0;) {
      d_x = block_backward(params.blocks[l][b], pyr.levels[l], pyr.same[l], act.blocks[l][b], d_x,
                           grads.blocks[l][b]);
    }
    if (l > 0) {
      ConvGradients g = conv_backward(params.down[l - 1], pyr.levels[l], pyr.levels[l - 1], pyr.down[l - 1],
                                      act.level_output[l - 1], d_x, &act.down_cache[l - 1], kTrainingBackward);
      accumulate(grads.down[l - 1], g);
      add_scaled(d_level_output[l - 1], g.d_features, 1.0);
    } else {
      linear_backward(params.input, act.initial_features, d_x, grads.input, false);
    }
  }
}

Matrix network_forward(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid, bool training,
                       std::mt19937_64& rng, NetworkActivations* keep) {
  NetworkActivations local;
  NetworkActivations& act = keep != nullptr ? *keep : local;
  act = encoder_forward(config, params, std::move(pyramid), training, rng);
  if (config.task == Task::Classification) return classify(act, *params.head);
  return decoder_forward(config, act, *params.decoder);
}

}  // namespace pne
