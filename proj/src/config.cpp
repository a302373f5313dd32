#include "pne/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pne/errors.hpp"

namespace pne {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& values, auto&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

// Consumes entries of one document, remembering which keys were read so the
// rest can be reported as unknown.
class Reader {
 public:
  explicit Reader(const IniDocument& doc) : doc_(doc) {}

  const IniEntry* find(const std::string& section, const std::string& key) {
    const auto s = doc_.sections.find(section);
    if (s == doc_.sections.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
  }

  void real(const std::string& section, const std::string& key, double& dst) {
    if (const auto* e = find(section, key)) dst = parse_real(path(section, key), e->value);
  }

  void count(const std::string& section, const std::string& key, std::size_t& dst) {
    if (const auto* e = find(section, key)) dst = parse_count(path(section, key), e->value);
  }

  void u64(const std::string& section, const std::string& key, std::uint64_t& dst) {
    if (const auto* e = find(section, key)) dst = parse_count(path(section, key), e->value);
  }

  void flag(const std::string& section, const std::string& key, bool& dst) {
    if (const auto* e = find(section, key)) {
      if (e->value == "true") dst = true;
      else if (e->value == "false") dst = false;
      else throw ConfigError(path(section, key), "expected true or false, got '" + e->value + "'");
    }
  }

  void text(const std::string& section, const std::string& key, std::string& dst) {
    if (const auto* e = find(section, key)) dst = e->value;
  }

  void counts(const std::string& section, const std::string& key, std::vector<std::size_t>& dst) {
    if (const auto* e = find(section, key)) {
      dst.clear();
      for (const auto& item : split_list(e->value)) dst.push_back(parse_count(path(section, key), item));
    }
  }

  void reals(const std::string& section, const std::string& key, std::vector<double>& dst) {
    if (const auto* e = find(section, key)) {
      dst.clear();
      for (const auto& item : split_list(e->value)) dst.push_back(parse_real(path(section, key), item));
    }
  }

  template <typename T, typename F>
  void parsed(const std::string& section, const std::string& key, T& dst, F&& parse) {
    if (const auto* e = find(section, key)) {
      try {
        dst = parse(std::string_view(e->value));
      } catch (const ParameterError& err) {
        throw ConfigError(path(section, key), err.what());
      }
    }
  }

  void reject_unknown() const {
    static const std::set<std::string> known{"experiment", "embedding", "neighborhood", "network", "train",
                                             "data", "grid", "sigma_sweep", "neigh_stats"};
    for (const auto& [section, entries] : doc_.sections) {
      if (!section.empty() && !known.contains(section)) throw ConfigError(section, "unknown section");
      for (const auto& [key, entry] : entries) {
        if (!used_.contains(section + "." + key)) {
          throw ConfigError(path(section, key), "unknown key (line " + std::to_string(entry.line) + ")");
        }
      }
    }
  }

  static std::string path(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }

 private:
  static double parse_real(const std::string& key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
      throw ConfigError(key, "expected a finite number, got '" + std::string(v) + "'");
    }
    return out;
  }

  static std::uint64_t parse_count(const std::string& key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError(key, "expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
  }

  const IniDocument& doc_;
  std::set<std::string> used_;
};

NeighborhoodKind parse_neighborhood(std::string_view v) {
  if (v == "knn") return NeighborhoodKind::Knn;
  if (v == "ball") return NeighborhoodKind::BallQuery;
  throw ParameterError("expected knn or ball, got '" + std::string(v) + "'");
}

Task parse_task(std::string_view v) {
  if (v == "classification") return Task::Classification;
  if (v == "segmentation") return Task::Segmentation;
  throw ParameterError("expected classification or segmentation, got '" + std::string(v) + "'");
}

EmbeddingKind parse_family(std::string_view v) {
  if (v == "kp") return EmbeddingKind::KernelPoint;
  if (v == "mlp") return EmbeddingKind::Mlp;
  if (v == "none") return EmbeddingKind::Identity;
  throw ParameterError("expected kp, mlp or none, got '" + std::string(v) + "'");
}

KernelPlacement parse_placement(std::string_view v) {
  if (v == "icosahedron") return KernelPlacement::Icosahedron;
  if (v == "grid") return KernelPlacement::Grid;
  throw ParameterError("expected icosahedron or grid, got '" + std::string(v) + "'");
}

Normalization parse_normalization(std::string_view v) {
  if (v == "mean") return Normalization::Mean;
  if (v == "sum") return Normalization::Sum;
  throw ParameterError("expected mean or sum, got '" + std::string(v) + "'");
}

RotationMode parse_rotation(std::string_view v) {
  if (v == "full") return RotationMode::Full;
  if (v == "up") return RotationMode::UpAxis;
  throw ParameterError("expected full or up, got '" + std::string(v) + "'");
}

std::string_view placement_name(KernelPlacement p) { return p == KernelPlacement::Grid ? "grid" : "icosahedron"; }
std::string_view normalization_name(Normalization n) { return n == Normalization::Sum ? "sum" : "mean"; }
std::string_view rotation_name(RotationMode r) { return r == RotationMode::UpAxis ? "up" : "full"; }

}  // namespace

IniDocument parse_ini(std::string_view text) {
  IniDocument doc;
  std::string section;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(lineno, "unterminated section header");
      const auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ParseError(lineno, "invalid section name '" + std::string(name) + "'");
      section = std::string(name);
      doc.sections[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(lineno, "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (!valid_name(key)) throw ParseError(lineno, "invalid key '" + std::string(key) + "'");
    auto& entries = doc.sections[section];
    if (entries.contains(std::string(key))) {
      throw ParseError(lineno, "duplicate key '" + std::string(key) + "'");
    }
    entries[std::string(key)] = IniEntry{std::string(trim(line.substr(eq + 1))), lineno};
  }
  return doc;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.network.encoder.initial_cell = 0.2;
  c.network.num_classes = 4;
  c.train.epochs = 30;
  c.train.batch_size = 8;
  return c;
}

ExperimentConfig resolve_experiment(const IniDocument& doc) {
  ExperimentConfig c = default_experiment_config();
  Reader r(doc);
  EncoderConfig& enc = c.network.encoder;
  EmbeddingSpec& emb = enc.embedding;

  r.parsed("experiment", "task", c.task, parse_task);
  c.network.task = c.task;
  if (const auto* e = r.find("experiment", "seeds")) {
    try {
      c.seeds = parse_seed_list(e->value);
    } catch (const ParameterError& err) {
      throw ConfigError("experiment.seeds", err.what());
    }
  }
  r.text("experiment", "output", c.output);
  r.u64("experiment", "data_seed", c.data_seed);
  r.flag("experiment", "record_wall_time", c.record_wall_time);

  r.parsed("embedding", "kind", emb.kind, parse_family);
  r.parsed("embedding", "correlation", emb.correlation, parse_correlation);
  r.parsed("embedding", "activation", emb.activation, parse_activation);
  r.count("embedding", "dim", emb.mlp_dim);
  r.real("embedding", "sigma_factor", emb.sigma_factor);
  r.parsed("embedding", "placement", emb.placement, parse_placement);
  r.count("embedding", "grid_size", emb.grid_size);

  r.parsed("neighborhood", "kind", enc.neighborhood.kind, parse_neighborhood);
  r.count("neighborhood", "k", enc.neighborhood.k);
  r.real("neighborhood", "scale", enc.neighborhood.scale);

  r.real("network", "initial_cell", enc.initial_cell);
  r.counts("network", "widths", enc.widths);
  // new widths without blocks: one block per level
  if (enc.widths.size() != enc.blocks_per_level.size()) enc.blocks_per_level.assign(enc.widths.size(), 1);
  r.counts("network", "blocks", enc.blocks_per_level);
  enc.num_levels = enc.widths.size();
  r.count("network", "common_dim", enc.common_dim);
  r.real("network", "max_drop_path", enc.max_drop_path);
  r.parsed("network", "normalize", enc.normalize, parse_normalization);
  r.flag("network", "conv_bias", enc.conv_bias);
  r.count("network", "num_classes", c.network.num_classes);
  r.counts("network", "decoder_widths", c.network.decoder_widths);

  TrainConfig& t = c.train;
  r.count("train", "epochs", t.epochs);
  r.count("train", "batch_size", t.batch_size);
  r.real("train", "max_lr", t.schedule.max_lr);
  r.real("train", "div_factor", t.schedule.div_factor);
  r.real("train", "final_factor", t.schedule.final_factor);
  r.real("train", "warmup_fraction", t.schedule.warmup_fraction);
  r.real("train", "beta1", t.optimizer.beta1);
  r.real("train", "beta2", t.optimizer.beta2);
  r.real("train", "eps", t.optimizer.eps);
  r.real("train", "weight_decay", t.optimizer.weight_decay);
  r.real("train", "clip_norm", t.clip_norm);
  r.count("train", "eval_every", t.eval_every);
  bool augmenting = false;
  AugmentationConfig aug;
  r.flag("train", "augment", augmenting);
  r.parsed("train", "aug_rotation", aug.rotation, parse_rotation);
  r.real("train", "mirror_prob", aug.mirror_prob);
  r.real("train", "scale_lo", aug.scale_lo);
  r.real("train", "scale_hi", aug.scale_hi);
  r.real("train", "jitter_sigma", aug.jitter_sigma);
  if (augmenting) t.augmentation = aug;

  ClassificationDataConfig& cd = c.classification;
  r.count("data", "train_per_class", cd.train_per_class);
  r.count("data", "test_per_class", cd.test_per_class);
  r.count("data", "points", cd.points);
  r.real("data", "noise_sigma", cd.noise_sigma);
  r.real("data", "object_scale_lo", cd.scale_lo);
  r.real("data", "object_scale_hi", cd.scale_hi);
  r.flag("data", "random_rotation", cd.random_rotation);
  SegmentationDataConfig& sd = c.segmentation;
  sd.noise_sigma = cd.noise_sigma;
  r.count("data", "train_scenes", sd.train_scenes);
  r.count("data", "test_scenes", sd.test_scenes);
  r.count("data", "shapes_per_scene", sd.shapes_per_scene);
  r.count("data", "points_per_shape", sd.points_per_shape);
  r.real("data", "scene_spacing", sd.spacing);

  if (const auto* e = r.find("grid", "embeddings")) {
    c.grid_embeddings.clear();
    for (const auto& label : split_list(e->value)) {
      try {
        parse_embedding_label(label);
      } catch (const Error& err) {
        throw ConfigError("grid.embeddings", err.what());
      }
      c.grid_embeddings.push_back(label);
    }
  }
  if (const auto* e = r.find("grid", "neighborhoods")) {
    c.grid_neighborhoods.clear();
    for (const auto& item : split_list(e->value)) {
      try {
        c.grid_neighborhoods.push_back(parse_neighborhood(item));
      } catch (const ParameterError& err) {
        throw ConfigError("grid.neighborhoods", err.what());
      }
    }
  }

  r.reals("sigma_sweep", "factors", c.sigma_factors);
  if (const auto* e = r.find("sigma_sweep", "correlations")) {
    c.sigma_correlations.clear();
    for (const auto& item : split_list(e->value)) {
      try {
        c.sigma_correlations.push_back(parse_correlation(item));
      } catch (const ParameterError& err) {
        throw ConfigError("sigma_sweep.correlations", err.what());
      }
    }
  }
  r.count("sigma_sweep", "coverage_samples", c.coverage_samples);
  r.count("neigh_stats", "clouds", c.stats_clouds);
  r.count("neigh_stats", "levels", c.stats_levels);
  r.real("neigh_stats", "initial_cell", c.stats_initial_cell);
  r.count("neigh_stats", "points", c.stats_points);

  r.reject_unknown();
  validate(c);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_experiment(parse_ini(ss.str()));
}

void validate(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ConfigError("experiment.seeds", "at least one seed is required");
  if (c.network.task != c.task) throw ConfigError("experiment.task", "network task disagrees");
  const EncoderConfig& enc = c.network.encoder;
  if (!(enc.initial_cell > 0.0)) throw ConfigError("network.initial_cell", "must be positive");
  if (enc.widths.empty()) throw ConfigError("network.widths", "at least one level is required");
  for (auto w : enc.widths)
    if (w == 0) throw ConfigError("network.widths", "widths must be >= 1");
  if (enc.blocks_per_level.size() != enc.widths.size()) {
    throw ConfigError("network.blocks", "needs one entry per level (" + std::to_string(enc.widths.size()) + ")");
  }
  if (!c.network.decoder_widths.empty() && c.network.decoder_widths.size() != enc.widths.size()) {
    throw ConfigError("network.decoder_widths", "needs one entry per level");
  }
  if (enc.common_dim == 0) throw ConfigError("network.common_dim", "must be >= 1");
  if (!(enc.max_drop_path >= 0.0 && enc.max_drop_path < 1.0)) throw ConfigError("network.max_drop_path", "must lie in [0, 1)");
  if (c.network.num_classes < 2) throw ConfigError("network.num_classes", "must be >= 2");
  if (enc.neighborhood.k == 0) throw ConfigError("neighborhood.k", "must be >= 1");
  if (!(enc.neighborhood.scale > 0.0)) throw ConfigError("neighborhood.scale", "must be positive");
  if (enc.embedding.mlp_dim == 0) throw ConfigError("embedding.dim", "must be >= 1");
  if (!(enc.embedding.sigma_factor > 0.0)) throw ConfigError("embedding.sigma_factor", "must be positive");
  if (enc.embedding.grid_size < 2) throw ConfigError("embedding.grid_size", "must be >= 2");
  const TrainConfig& t = c.train;
  if (t.epochs == 0) throw ConfigError("train.epochs", "must be >= 1");
  if (t.batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(t.schedule.max_lr > 0.0)) throw ConfigError("train.max_lr", "must be positive");
  if (!(t.schedule.div_factor > 1.0)) throw ConfigError("train.div_factor", "must exceed 1");
  if (!(t.schedule.final_factor > 1.0)) throw ConfigError("train.final_factor", "must exceed 1");
  if (!(t.schedule.warmup_fraction > 0.0 && t.schedule.warmup_fraction < 1.0)) {
    throw ConfigError("train.warmup_fraction", "must lie in (0, 1)");
  }
  if (!(t.clip_norm > 0.0)) throw ConfigError("train.clip_norm", "must be positive");
  if (!(t.optimizer.beta1 >= 0.0 && t.optimizer.beta1 < 1.0)) throw ConfigError("train.beta1", "must lie in [0, 1)");
  if (!(t.optimizer.beta2 >= 0.0 && t.optimizer.beta2 < 1.0)) throw ConfigError("train.beta2", "must lie in [0, 1)");
  if (!(t.optimizer.eps > 0.0)) throw ConfigError("train.eps", "must be positive");
  if (!(t.optimizer.weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (t.augmentation) {
    try {
      validate(*t.augmentation);
    } catch (const ParameterError& e) {
      throw ConfigError("train.augment", e.what());
    }
  }
  if (c.classification.points == 0) throw ConfigError("data.points", "must be >= 1");
  if (c.classification.train_per_class == 0) throw ConfigError("data.train_per_class", "must be >= 1");
  if (!(c.classification.scale_lo > 0.0 && c.classification.scale_lo <= c.classification.scale_hi)) {
    throw ConfigError("data.object_scale_lo", "needs 0 < lo <= hi");
  }
  if (c.segmentation.shapes_per_scene == 0) throw ConfigError("data.shapes_per_scene", "must be >= 1");
  if (c.segmentation.points_per_shape == 0) throw ConfigError("data.points_per_shape", "must be >= 1");
  if (c.sigma_factors.empty()) throw ConfigError("sigma_sweep.factors", "at least one factor is required");
  for (double f : c.sigma_factors)
    if (!(f > 0.0)) throw ConfigError("sigma_sweep.factors", "factors must be positive");
  for (auto k : c.sigma_correlations) {
    if (k == CorrelationKind::Box) throw ConfigError("sigma_sweep.correlations", "box has no sigma to sweep");
  }
  if (c.grid_neighborhoods.empty()) throw ConfigError("grid.neighborhoods", "at least one neighborhood is required");
  if (c.coverage_samples == 0) throw ConfigError("sigma_sweep.coverage_samples", "must be >= 1");
  if (c.stats_clouds == 0) throw ConfigError("neigh_stats.clouds", "must be >= 1");
  if (c.stats_levels == 0) throw ConfigError("neigh_stats.levels", "must be >= 1");
  if (!(c.stats_initial_cell > 0.0)) throw ConfigError("neigh_stats.initial_cell", "must be positive");
  if (c.stats_points == 0) throw ConfigError("neigh_stats.points", "must be >= 1");
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ParameterError("bad seed '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError("seed list is empty");
  return out;
}

std::string to_ini(const ExperimentConfig& c) {
  const EncoderConfig& enc = c.network.encoder;
  const EmbeddingSpec& emb = enc.embedding;
  const TrainConfig& t = c.train;
  const AugmentationConfig aug = t.augmentation.value_or(AugmentationConfig{});
  auto count = [](std::size_t v) { return std::to_string(v); };
  std::ostringstream o;
  o << "[experiment]\n"
    << "task = " << to_string(c.task) << "\n"
    << "seeds = " << join(c.seeds, [](std::uint64_t v) { return std::to_string(v); }) << "\n"
    << "output = " << c.output << "\n"
    << "data_seed = " << c.data_seed << "\n"
    << "record_wall_time = " << (c.record_wall_time ? "true" : "false") << "\n\n"
    << "[embedding]\n"
    << "kind = " << emb.family() << "\n"
    << "correlation = " << to_string(emb.correlation) << "\n"
    << "activation = " << to_string(emb.activation) << "\n"
    << "dim = " << emb.mlp_dim << "\n"
    << "sigma_factor = " << format_real(emb.sigma_factor) << "\n"
    << "placement = " << placement_name(emb.placement) << "\n"
    << "grid_size = " << emb.grid_size << "\n\n"
    << "[neighborhood]\n"
    << "kind = " << to_string(enc.neighborhood.kind) << "\n"
    << "k = " << enc.neighborhood.k << "\n"
    << "scale = " << format_real(enc.neighborhood.scale) << "\n\n"
    << "[network]\n"
    << "initial_cell = " << format_real(enc.initial_cell) << "\n"
    << "widths = " << join(enc.widths, count) << "\n"
    << "blocks = " << join(enc.blocks_per_level, count) << "\n"
    << "common_dim = " << enc.common_dim << "\n"
    << "max_drop_path = " << format_real(enc.max_drop_path) << "\n"
    << "normalize = " << normalization_name(enc.normalize) << "\n"
    << "conv_bias = " << (enc.conv_bias ? "true" : "false") << "\n"
    << "num_classes = " << c.network.num_classes << "\n"
    << "decoder_widths = " << join(c.network.decoder_widths, count) << "\n\n"
    << "[train]\n"
    << "epochs = " << t.epochs << "\n"
    << "batch_size = " << t.batch_size << "\n"
    << "max_lr = " << format_real(t.schedule.max_lr) << "\n"
    << "div_factor = " << format_real(t.schedule.div_factor) << "\n"
    << "final_factor = " << format_real(t.schedule.final_factor) << "\n"
    << "warmup_fraction = " << format_real(t.schedule.warmup_fraction) << "\n"
    << "beta1 = " << format_real(t.optimizer.beta1) << "\n"
    << "beta2 = " << format_real(t.optimizer.beta2) << "\n"
    << "eps = " << format_real(t.optimizer.eps) << "\n"
    << "weight_decay = " << format_real(t.optimizer.weight_decay) << "\n"
    << "clip_norm = " << format_real(t.clip_norm) << "\n"
    << "eval_every = " << t.eval_every << "\n"
    << "augment = " << (t.augmentation ? "true" : "false") << "\n"
    << "aug_rotation = " << rotation_name(aug.rotation) << "\n"
    << "mirror_prob = " << format_real(aug.mirror_prob) << "\n"
    << "scale_lo = " << format_real(aug.scale_lo) << "\n"
    << "scale_hi = " << format_real(aug.scale_hi) << "\n"
    << "jitter_sigma = " << format_real(aug.jitter_sigma) << "\n\n"
    << "[data]\n"
    << "train_per_class = " << c.classification.train_per_class << "\n"
    << "test_per_class = " << c.classification.test_per_class << "\n"
    << "points = " << c.classification.points << "\n"
    << "noise_sigma = " << format_real(c.classification.noise_sigma) << "\n"
    << "object_scale_lo = " << format_real(c.classification.scale_lo) << "\n"
    << "object_scale_hi = " << format_real(c.classification.scale_hi) << "\n"
    << "random_rotation = " << (c.classification.random_rotation ? "true" : "false") << "\n"
    << "train_scenes = " << c.segmentation.train_scenes << "\n"
    << "test_scenes = " << c.segmentation.test_scenes << "\n"
    << "shapes_per_scene = " << c.segmentation.shapes_per_scene << "\n"
    << "points_per_shape = " << c.segmentation.points_per_shape << "\n"
    << "scene_spacing = " << format_real(c.segmentation.spacing) << "\n\n"
    << "[grid]\n"
    << "embeddings = " << join(c.grid_embeddings, [](const std::string& s) { return s; }) << "\n"
    << "neighborhoods = "
    << join(c.grid_neighborhoods, [](NeighborhoodKind k) { return std::string(to_string(k)); }) << "\n\n"
    << "[sigma_sweep]\n"
    << "factors = " << join(c.sigma_factors, format_real) << "\n"
    << "correlations = "
    << join(c.sigma_correlations, [](CorrelationKind k) { return std::string(to_string(k)); }) << "\n"
    << "coverage_samples = " << c.coverage_samples << "\n\n"
    << "[neigh_stats]\n"
    << "clouds = " << c.stats_clouds << "\n"
    << "levels = " << c.stats_levels << "\n"
    << "initial_cell = " << format_real(c.stats_initial_cell) << "\n"
    << "points = " << c.stats_points << "\n";
  return o.str();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  const EncoderConfig& enc = c.network.encoder;
  const EmbeddingSpec& emb = enc.embedding;
  const TrainConfig& t = c.train;
  json j;
  j["experiment"] = {{"task", to_string(c.task)},
                     {"seeds", c.seeds},
                     {"output", c.output},
                     {"data_seed", c.data_seed},
                     {"record_wall_time", c.record_wall_time}};
  j["embedding"] = {{"kind", emb.family()},
                    {"label", emb.label()},
                    {"correlation", to_string(emb.correlation)},
                    {"activation", to_string(emb.activation)},
                    {"dim", emb.mlp_dim},
                    {"sigma_factor", emb.sigma_factor},
                    {"placement", placement_name(emb.placement)},
                    {"grid_size", emb.grid_size}};
  j["neighborhood"] = {{"kind", to_string(enc.neighborhood.kind)},
                       {"k", enc.neighborhood.k},
                       {"scale", enc.neighborhood.scale}};
  j["network"] = {{"initial_cell", enc.initial_cell},
                  {"widths", enc.widths},
                  {"blocks", enc.blocks_per_level},
                  {"common_dim", enc.common_dim},
                  {"max_drop_path", enc.max_drop_path},
                  {"normalize", normalization_name(enc.normalize)},
                  {"conv_bias", enc.conv_bias},
                  {"num_classes", c.network.num_classes},
                  {"decoder_widths", c.network.decoder_widths},
                  {"knn_average_distance", enc.knn_average_distance}};
  json train = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"max_lr", t.schedule.max_lr},
                {"div_factor", t.schedule.div_factor},
                {"final_factor", t.schedule.final_factor},
                {"warmup_fraction", t.schedule.warmup_fraction},
                {"beta1", t.optimizer.beta1},
                {"beta2", t.optimizer.beta2},
                {"eps", t.optimizer.eps},
                {"weight_decay", t.optimizer.weight_decay},
                {"clip_norm", t.clip_norm},
                {"eval_every", t.eval_every},
                {"augment", t.augmentation.has_value()}};
  if (t.augmentation) {
    const auto& a = *t.augmentation;
    train["augmentation"] = {{"rotation", rotation_name(a.rotation)},
                             {"mirror_prob", a.mirror_prob},
                             {"scale_lo", a.scale_lo},
                             {"scale_hi", a.scale_hi},
                             {"jitter_sigma", a.jitter_sigma}};
  }
  j["train"] = train;
  j["data"] = {{"train_per_class", c.classification.train_per_class},
               {"test_per_class", c.classification.test_per_class},
               {"points", c.classification.points},
               {"noise_sigma", c.classification.noise_sigma},
               {"object_scale_lo", c.classification.scale_lo},
               {"object_scale_hi", c.classification.scale_hi},
               {"random_rotation", c.classification.random_rotation},
               {"train_scenes", c.segmentation.train_scenes},
               {"test_scenes", c.segmentation.test_scenes},
               {"shapes_per_scene", c.segmentation.shapes_per_scene},
               {"points_per_shape", c.segmentation.points_per_shape},
               {"scene_spacing", c.segmentation.spacing}};
  std::vector<std::string> neigh;
  for (auto k : c.grid_neighborhoods) neigh.emplace_back(to_string(k));
  j["grid"] = {{"embeddings", c.grid_embeddings}, {"neighborhoods", neigh}};
  std::vector<std::string> corr;
  for (auto k : c.sigma_correlations) corr.emplace_back(to_string(k));
  j["sigma_sweep"] = {{"factors", c.sigma_factors}, {"correlations", corr}, {"coverage_samples", c.coverage_samples}};
  j["neigh_stats"] = {{"clouds", c.stats_clouds},
                      {"levels", c.stats_levels},
                      {"initial_cell", c.stats_initial_cell},
                      {"points", c.stats_points}};
  return j;
}

}  // namespace pne
