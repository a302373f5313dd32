#include "pne/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "pne/errors.hpp"

namespace pne {

std::size_t OneCycleSchedule::warmup_steps() const {
  const auto w = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
  return std::clamp<std::size_t>(w, 1, total_steps > 1 ? total_steps - 1 : 1);
}

void validate(const OneCycleSchedule& s) {
  if (!(s.max_lr > 0.0)) throw ParameterError("max_lr must be positive");
  if (!(s.div_factor > 1.0) || !(s.final_factor > 1.0)) throw ParameterError("schedule factors must exceed 1");
  if (!(s.warmup_fraction > 0.0 && s.warmup_fraction < 1.0)) throw ParameterError("warmup_fraction must lie in (0, 1)");
  if (s.total_steps < 2) throw ParameterError("one-cycle schedule needs at least 2 steps");
}

namespace {

// a at pct = 0, b at pct = 1, both exact.
double cosine_blend(double a, double b, double pct) {
  const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * pct));
  return a * (1.0 - w) + b * w;
}

}  // namespace

double onecycle_lr(const OneCycleSchedule& s, std::size_t step) {
  validate(s);
  if (step > s.total_steps) {
    throw ParameterError("step " + std::to_string(step) + " beyond schedule end " + std::to_string(s.total_steps));
  }
  const std::size_t warm = s.warmup_steps();
  if (step <= warm) {
    return cosine_blend(s.initial_lr(), s.max_lr, static_cast<double>(step) / static_cast<double>(warm));
  }
  return cosine_blend(s.max_lr, s.min_lr(),
                      static_cast<double>(step - warm) / static_cast<double>(s.total_steps - warm));
}

double clip_grad_norm(std::span<const ParamView> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ParameterError("max_norm must be positive");
  std::vector<double> per_tensor;
  per_tensor.reserve(grads.size());
  std::vector<double> squares;
  for (const ParamView& g : grads) {
    squares.resize(g.values.size());
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      if (!std::isfinite(g.values[i])) throw TrainingFault(g.name, "non-finite gradient in " + g.name);
      squares[i] = g.values[i] * g.values[i];
    }
    per_tensor.push_back(deterministic_sum(squares));
  }
  const double total = std::sqrt(deterministic_sum(per_tensor));
  if (!std::isfinite(total)) throw TrainingFault("gradient-norm", "gradient norm overflowed");
  if (total > max_norm) {
    const double scale = max_norm / total;
    for (const ParamView& g : grads)
      for (double& v : g.values) v *= scale;
  }
  return total;
}

AdamWState::AdamWState(const AdamWConfig& cfg, std::span<const ParamView> params) : config(cfg) {
  for (const ParamView& p : params) {
    m.emplace_back(p.values.size(), 0.0);
    v.emplace_back(p.values.size(), 0.0);
  }
}

void adamw_step(AdamWState& state, std::span<const ParamView> params, std::span<const ParamView> grads, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("optimizer state, parameters and gradients disagree in tensor count");
  }
  const AdamWConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto p = params[k].values;
    const auto g = grads[k].values;
    if (p.size() != g.size() || p.size() != state.m[k].size()) {
      throw DimensionError("shape mismatch for " + params[k].name);
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i])) throw TrainingFault(grads[k].name, "non-finite gradient in " + grads[k].name);
      p[i] -= lr * c.weight_decay * p[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
      if (!std::isfinite(p[i])) throw TrainingFault(params[k].name, "non-finite parameter in " + params[k].name);
    }
  }
}

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("one label per logit row required");
  if (logits.rows() == 0) throw DimensionError("cross-entropy over zero samples");
  const std::size_t classes = logits.cols();
  LossResult r;
  r.d_logits = Matrix(logits.rows(), classes);
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  std::vector<double> losses(logits.rows());
  for (std::size_t n = 0; n < logits.rows(); ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ParameterError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    const auto z = logits.row(n);
    const std::size_t arg = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    const double zmax = z[arg];
    double rest = 0.0;  // sum of exp(z - max) excluding the max term itself
    for (std::size_t c = 0; c < classes; ++c)
      if (c != arg) rest += std::exp(z[c] - zmax);
    const double log_norm = std::log1p(rest);
    losses[n] = log_norm + (zmax - z[static_cast<std::size_t>(label)]);
    auto d = r.d_logits.row(n);
    for (std::size_t c = 0; c < classes; ++c) d[c] = std::exp(z[c] - zmax - log_norm) * inv_batch;
    d[static_cast<std::size_t>(label)] -= inv_batch;
  }
  r.loss = deterministic_sum(losses) * inv_batch;
  return r;
}

Metrics::Metrics(std::size_t num_classes) : classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ParameterError("metrics need >= 1 class");
}

void Metrics::add(int truth, int prediction) {
  if (truth < 0 || prediction < 0 || static_cast<std::size_t>(truth) >= classes_ ||
      static_cast<std::size_t>(prediction) >= classes_) {
    throw ParameterError("class id outside [0, " + std::to_string(classes_) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(prediction)];
}

void Metrics::merge(const Metrics& other) {
  if (other.classes_ != classes_) throw DimensionError("merging metrics with different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t Metrics::total() const noexcept { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

MetricSummary metrics_compute(const Metrics& m) {
  const std::uint64_t total = m.total();
  if (total == 0) throw StatisticsError("confusion matrix is empty");
  const std::size_t k = m.num_classes();
  std::uint64_t trace = 0;
  double acc_sum = 0.0, iou_sum = 0.0;
  std::size_t acc_n = 0, iou_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::uint64_t tp = m.count(c, c);
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m.count(c, j);
      col += m.count(j, c);
    }
    trace += tp;
    if (row > 0) {
      acc_sum += static_cast<double>(tp) / static_cast<double>(row);
      ++acc_n;
    }
    const std::uint64_t uni = row + col - tp;
    if (uni > 0) {
      iou_sum += static_cast<double>(tp) / static_cast<double>(uni);
      ++iou_n;
    }
  }
  return {static_cast<double>(trace) / static_cast<double>(total), acc_sum / static_cast<double>(acc_n),
          iou_sum / static_cast<double>(iou_n)};
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t n = 0; n < logits.rows(); ++n) {
    const auto z = logits.row(n);
    out[n] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

NetworkConfig resolve_network_config(const NetworkConfig& config, const Dataset& train) {
  NetworkConfig out = config;
  if (out.encoder.neighborhood.kind == NeighborhoodKind::Knn && out.encoder.knn_average_distance.empty()) {
    out.encoder.knn_average_distance = estimate_knn_average_distance(out.encoder, train.clouds);
  }
  return out;
}

std::vector<Pyramid> build_pyramids(const NetworkConfig& config, const Dataset& data) {
  std::vector<Pyramid> out;
  out.reserve(data.size());
  for (const PointCloud& c : data.clouds) {
    out.push_back(build_pyramid(config.encoder, c, config.task == Task::Segmentation));
  }
  return out;
}

Metrics evaluate(const NetworkConfig& config, const NetworkParams& params, const Dataset& data,
                 const std::vector<Pyramid>& pyramids) {
  if (pyramids.size() != data.size()) throw DimensionError("one pyramid per cloud required");
  Metrics m(config.num_classes);
  std::mt19937_64 unused(0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    NetworkActivations act;
    const Matrix logits = network_forward(config, params, pyramids[i], false, unused, &act);
    const auto pred = argmax_rows(logits);
    if (config.task == Task::Classification) {
      m.add(data.labels.at(i), pred[0]);
    } else {
      const auto& truth = act.pyramid.levels[0].labels;
      if (!truth) throw DimensionError("segmentation cloud without labels");
      for (std::size_t p = 0; p < pred.size(); ++p) m.add((*truth)[p], pred[p]);
    }
  }
  return m;
}

Metrics evaluate(const NetworkConfig& config, const NetworkParams& params, const Dataset& data) {
  return evaluate(config, params, data, build_pyramids(config, data));
}

double sample_loss_and_grad(const NetworkConfig& config, const NetworkParams& params, Pyramid pyramid,
                            const Dataset& data, std::size_t index, double weight, std::mt19937_64& rng,
                            NetworkParams* grads) {
  NetworkActivations act;
  const Matrix logits = network_forward(config, params, std::move(pyramid), grads != nullptr, rng, &act);
  LossResult lr;
  if (config.task == Task::Classification) {
    const int label = data.labels.at(index);
    lr = cross_entropy(logits, std::span<const int>(&label, 1));
  } else {
    const auto& truth = act.pyramid.levels[0].labels;
    if (!truth) throw DimensionError("segmentation cloud without labels");
    lr = cross_entropy(logits, *truth);
  }
  if (grads != nullptr) {
    for (double& v : lr.d_logits.values()) v *= weight;
    network_backward(config, params, act, lr.d_logits, *grads);
  }
  return lr.loss;
}

TrainResult train_loop(const NetworkConfig& config_in, const Dataset& train, const Dataset* eval, TrainConfig tc,
                       std::uint64_t seed, const EpochCallback& on_epoch) {
  if (train.size() == 0) throw ParameterError("training set is empty");
  if (tc.batch_size == 0 || tc.epochs == 0) throw ParameterError("epochs and batch_size must be >= 1");
  if (tc.augmentation) validate(*tc.augmentation);

  TrainResult result;
  result.config = resolve_network_config(config_in, train);
  const NetworkConfig& config = result.config;
  const bool segmentation = config.task == Task::Segmentation;
  result.params = init_network(config, derive_seed(seed, 0));
  NetworkParams grads = zeros_like(result.params);
  const std::vector<ParamView> views = parameters(result.params);
  const std::vector<ParamView> gviews = parameters(grads);
  AdamWState opt(tc.optimizer, views);

  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  tc.schedule.total_steps = tc.epochs * steps_per_epoch;
  validate(tc.schedule);

  const bool augmenting = tc.augmentation && tc.augmentation->any();
  std::vector<Pyramid> cached;
  if (!augmenting) cached = build_pyramids(config, train);
  std::vector<Pyramid> eval_pyramids;
  if (eval != nullptr) eval_pyramids = build_pyramids(config, *eval);

  std::mt19937_64 order_rng(derive_seed(seed, 1));
  std::mt19937_64 drop_rng(derive_seed(seed, 2));
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochLog log;
    log.epoch = epoch;
    log.step = step;
    log.lr = onecycle_lr(tc.schedule, step);
    std::vector<double> losses;
    losses.reserve(n);

    for (std::size_t begin = 0; begin < n; begin += tc.batch_size) {
      const std::size_t end = std::min(n, begin + tc.batch_size);
      const double weight = 1.0 / static_cast<double>(end - begin);
      for (const ParamView& g : gviews) std::fill(g.values.begin(), g.values.end(), 0.0);
      try {
        for (std::size_t b = begin; b < end; ++b) {
          const std::size_t i = order[b];
          Pyramid pyr = augmenting ? build_pyramid(config.encoder,
                                                   augment(train.clouds[i], *tc.augmentation,
                                                           derive_seed(seed, 1000 + epoch * n + i)),
                                                   segmentation)
                                   : cached[i];
          const double loss = sample_loss_and_grad(config, result.params, std::move(pyr), train, i, weight,
                                                   drop_rng, &grads);
          if (!std::isfinite(loss)) throw TrainingFault("loss", "non-finite loss");
          losses.push_back(loss);
        }
        clip_grad_norm(gviews, tc.clip_norm);
        adamw_step(opt, views, gviews, onecycle_lr(tc.schedule, step));
      } catch (const TrainingFault& e) {
        throw TrainingFault(e.tensor(), "step " + std::to_string(step) + ": " + e.what());
      }
      ++step;
    }
    log.train_loss = deterministic_sum(losses) / static_cast<double>(losses.size());
    const bool last = epoch + 1 == tc.epochs;
    if (eval != nullptr && (last || (tc.eval_every > 0 && (epoch + 1) % tc.eval_every == 0))) {
      log.eval = metrics_compute(evaluate(config, result.params, *eval, eval_pyramids));
      if (last) result.final_eval = log.eval;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

}  // namespace pne
