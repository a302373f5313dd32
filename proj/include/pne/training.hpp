#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pne/datagen.hpp"
#include "pne/layers.hpp"
#include "pne/network.hpp"

namespace pne {

// Cosine one-cycle: max_lr/div_factor -> max_lr over the warmup, then down to
// max_lr/div_factor/final_factor at total_steps.
struct OneCycleSchedule {
  double max_lr = 0.005;
  double div_factor = 10.0;
  double final_factor = 1000.0;
  double warmup_fraction = 0.3;
  std::size_t total_steps = 1;

  double initial_lr() const { return max_lr / div_factor; }
  double min_lr() const { return initial_lr() / final_factor; }
  // round(warmup_fraction * total_steps), clamped to [1, total_steps - 1].
  std::size_t warmup_steps() const;
};

void validate(const OneCycleSchedule& s);
double onecycle_lr(const OneCycleSchedule& s, std::size_t step);

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping. Non-finite values raise a
// TrainingFault naming the tensor.
double clip_grad_norm(std::span<const ParamView> grads, double max_norm);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct AdamWState {
  AdamWConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  AdamWState() = default;
  AdamWState(const AdamWConfig& cfg, std::span<const ParamView> params);
};

// Decoupled decay first (p -= lr*wd*p), then the bias-corrected Adam step.
void adamw_step(AdamWState& state, std::span<const ParamView> params, std::span<const ParamView> grads, double lr);

struct LossResult {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean softmax cross-entropy over rows; d_logits = (softmax - onehot) / rows.
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels);

// Confusion counts, rows = ground truth, cols = prediction.
class Metrics {
 public:
  explicit Metrics(std::size_t num_classes);
  void add(int truth, int prediction);
  void merge(const Metrics& other);
  std::size_t num_classes() const noexcept { return classes_; }
  std::uint64_t count(std::size_t truth, std::size_t prediction) const { return counts_[truth * classes_ + prediction]; }
  std::uint64_t total() const noexcept;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

struct MetricSummary {
  double overall_accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  double mean_iou = 0.0;
};

// mAcc averages over classes with ground-truth samples; mIoU over classes
// seen in ground truth or predictions.
MetricSummary metrics_compute(const Metrics& m);

// Row-wise argmax, ties to the smallest class.
std::vector<int> argmax_rows(const Matrix& logits);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  OneCycleSchedule schedule;  // total_steps is filled in by train_loop
  AdamWConfig optimizer;
  double clip_norm = 100.0;
  std::optional<AugmentationConfig> augmentation;
  // Evaluate on the held-out set every n epochs (and always after the last); 0 = last only.
  std::size_t eval_every = 1;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global step at the start of the epoch
  double lr = 0.0;       // learning rate used at that step
  double train_loss = 0.0;
  std::optional<MetricSummary> eval;
};

struct TrainResult {
  NetworkConfig config;  // with kNN distances resolved
  NetworkParams params;
  std::vector<EpochLog> log;
  std::optional<MetricSummary> final_eval;
};

// Resolves per-level kNN distances from the training clouds when the
// configuration uses kNN and none are set.
NetworkConfig resolve_network_config(const NetworkConfig& config, const Dataset& train);

// Precomputed pyramids (no augmentation) for evaluation.
std::vector<Pyramid> build_pyramids(const NetworkConfig& config, const Dataset& data);

// Confusion over a dataset. Segmentation is scored on level-0 points
// against their majority labels.
Metrics evaluate(const NetworkConfig& config, const NetworkParams& params, const Dataset& data,
                 const std::vector<Pyramid>& pyramids);
Metrics evaluate(const NetworkConfig& config, const NetworkParams& params, const Dataset& data);

// Loss and gradient accumulation for one sample; returns its loss.
double sample_loss_and_grad(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid,
                            const Dataset& data, std::size_t index, double weight, std::mt19937_64& rng,
                            NetworkParams* grads);

using EpochCallback = std::function<void(const EpochLog&)>;

// Seeded, sequential training: shuffle, augment, forward/backward per batch,
// clip, one-cycle lr, AdamW. Bit-identical for a fixed seed.
TrainResult train_loop(const NetworkConfig& config, const Dataset& train, const Dataset* eval, TrainConfig tc,
                       std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace pne
