#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pne/embeddings.hpp"
#include "pne/geometry.hpp"
#include "pne/layers.hpp"
#include "pne/pointconv.hpp"

namespace pne {

enum class Task { Classification, Segmentation };
enum class EmbeddingKind { KernelPoint, Mlp, Identity };
enum class KernelPlacement { Icosahedron, Grid };
enum class NeighborhoodKind { Knn, BallQuery };

std::string_view to_string(Task task);
std::string_view to_string(NeighborhoodKind kind);

// Declarative description of the embedding used by every convolution.
struct EmbeddingSpec {
  EmbeddingKind kind = EmbeddingKind::KernelPoint;
  CorrelationKind correlation = CorrelationKind::Gaussian;
  ActivationKind activation = ActivationKind::GELU;
  std::size_t mlp_dim = 16;
  double sigma_factor = 1.0;
  KernelPlacement placement = KernelPlacement::Icosahedron;
  std::size_t grid_size = 3;

  // "kp" / "mlp" / "none".
  std::string family() const;
  // "box", "gelu", ... or "" for the identity embedding.
  std::string variant() const;
  // family-variant, e.g. "kp-gaussian".
  std::string label() const;
};

// Parses labels produced by EmbeddingSpec::label().
EmbeddingSpec parse_embedding_label(std::string_view label);

// KP box/triangular/gaussian, MLP relu/gelu/sin, and none.
std::vector<EmbeddingSpec> all_embedding_variants();

struct NeighborhoodSpec {
  NeighborhoodKind kind = NeighborhoodKind::BallQuery;
  std::size_t k = 16;
  double scale = 2.0;  // ball radius = scale * support cell size
};

struct EncoderConfig {
  double initial_cell = 0.05;
  std::vector<std::size_t> widths{16, 32, 64};
  std::vector<std::size_t> blocks_per_level{1, 1, 1};
  std::size_t num_levels = 3;
  NeighborhoodSpec neighborhood;
  EmbeddingSpec embedding;
  std::size_t common_dim = 16;
  std::size_t in_features = 2;
  double max_drop_path = 0.0;
  Normalization normalize = Normalization::Mean;
  bool conv_bias = false;
  Vec3 grid_origin{0.0, 0.0, 0.0};
  // Average kNN neighbor distance per level, used to place kNN kernel points.
  // A missing entry falls back to the level's cell size.
  std::vector<double> knn_average_distance;

  double cell_size(std::size_t level) const;
};

void validate(const EncoderConfig& config);

struct NetworkConfig {
  Task task = Task::Classification;
  EncoderConfig encoder;
  std::size_t num_classes = 4;
  // Decoder width per level; empty means the encoder widths.
  std::vector<std::size_t> decoder_widths;
};

// Multi-resolution geometry for one input cloud, with every neighbor list
// the network needs. All lists are sorted by support index.
struct Pyramid {
  std::vector<PointCloud> levels;
  std::vector<NeighborList> same;      // [l]: level l -> level l
  std::vector<NeighborList> down;      // [l]: query level l+1, support level l
  std::vector<NeighborList> up;        // [l]: query level l, support level l+1
  std::vector<NeighborList> to_first;  // [l]: query level 0, support level l (entry 0 unused)
};

// Constant 1 and height above the cloud minimum.
Matrix default_input_features(const PointCloud& cloud);

NeighborList select_neighbors(const NeighborhoodSpec& spec, const PointCloud& query, const PointCloud& support,
                              double support_cell);

// Builds the cell-average pyramid (cell size doubles per level) and the
// neighbor lists. Input features default to default_input_features; labels
// are carried by majority vote. Throws DegenerateInputError naming an empty level.
Pyramid build_pyramid(const EncoderConfig& config, const PointCloud& input, bool with_decoder_lists);

// Mean kNN neighbor distance per level over a set of clouds.
std::vector<double> estimate_knn_average_distance(const EncoderConfig& config, const std::vector<PointCloud>& clouds);

// Embedding for a convolution whose support lives at the given cell size.
Embedding make_embedding(const EncoderConfig& config, double support_cell, std::uint64_t seed);

struct MetaformerBlock {
  LayerNorm norm1;
  ConvLayer mixer;
  LayerNorm norm2;
  LinearLayer fc1;  // width -> 2 width
  LinearLayer fc2;  // 2 width -> width
  double drop_path_rate = 0.0;
};

struct DecoderParams {
  std::vector<LinearLayer> skip;   // [l]: encoder width l -> decoder width l
  std::vector<ConvLayer> up;       // [l]: decoder level l+1 -> level l
  std::vector<ConvLayer> direct;   // [l]: decoder level l -> level 0 (entry 0 unused)
  LinearLayer output;              // decoder width 0 -> classes
};

struct NetworkParams {
  LinearLayer input;
  std::vector<std::vector<MetaformerBlock>> blocks;
  std::vector<ConvLayer> down;
  std::optional<LinearLayer> head;
  std::optional<DecoderParams> decoder;
};

// Flat, ordered list of named parameter tensors.
std::vector<ParamView> parameters(NetworkParams& params);
NetworkParams zeros_like(const NetworkParams& params);
std::size_t parameter_count(const NetworkParams& params);

NetworkParams init_network(const NetworkConfig& config, std::uint64_t seed);

struct BlockCache {
  Matrix input;
  LayerNormCache norm1;
  Matrix normed1;
  ConvCache conv;
  Matrix mixed;
  double keep1 = 1.0;
  Matrix after_mixer;
  LayerNormCache norm2;
  Matrix normed2;
  Matrix hidden_pre;
  Matrix hidden;
  double keep2 = 1.0;
};

struct NetworkActivations {
  Pyramid pyramid;
  Matrix initial_features;                       // level-0 input features
  std::vector<Matrix> level_input;               // features entering level l
  std::vector<std::vector<BlockCache>> blocks;   // per level
  std::vector<Matrix> level_output;              // encoder map after level l blocks
  std::vector<ConvCache> down_cache;
  // decoder
  std::vector<Matrix> skip_out;
  std::vector<Matrix> decoder_maps;
  std::vector<ConvCache> up_cache;
  std::vector<ConvCache> direct_cache;
  Matrix summed;
  // classification
  Matrix pooled;
};

// Pre-norm Metaformer block: x += drop(mixer(norm1(x))); x += drop(mlp(norm2(x))).
// In training each residual branch is dropped with probability
// drop_path_rate and otherwise scaled by 1/(1 - rate).
Matrix block_forward(const MetaformerBlock& block, const PointCloud& cloud, const NeighborList& neighbors,
                     const Matrix& features, bool training, std::mt19937_64& rng, BlockCache* cache = nullptr);

// Accumulates parameter gradients and returns dL/d(input features).
Matrix block_backward(const MetaformerBlock& block, const PointCloud& cloud, const NeighborList& neighbors,
                      const BlockCache& cache, const Matrix& d_out, MetaformerBlock& grads);

NetworkActivations encoder_forward(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid,
                                   bool training, std::mt19937_64& rng);

// Mean of last-level features through the head: 1 x classes.
Matrix classify(NetworkActivations& activations, const LinearLayer& head);

// Per-point logits on level 0: level-0 size x classes.
Matrix decoder_forward(const NetworkConfig& config, NetworkActivations& activations, const DecoderParams& decoder);

// Backpropagates d_logits (from classify or decoder_forward) into grads.
void network_backward(const NetworkConfig& config, const NetworkParams& params, NetworkActivations& activations,
                      const Matrix& d_logits, NetworkParams& grads);

// Convenience: pyramid + encoder + head/decoder.
Matrix network_forward(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid, bool training,
                       std::mt19937_64& rng, NetworkActivations* keep = nullptr);

}  // namespace pne
