#include "pne/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include "pne/errors.hpp"
#include "pne/serialization.hpp"
#include "pne/simd.hpp"

namespace pne {

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

bool record_wall_time(const ExperimentConfig& cfg) { return cfg.record_wall_time && !simd::deterministic_mode(); }

DatasetSplit make_task_data(const ExperimentConfig& cfg) {
  if (cfg.task == Task::Classification) return make_classification_dataset(cfg.classification, cfg.data_seed);
  return make_segmentation_dataset(cfg.segmentation, cfg.data_seed);
}

NetworkConfig cell_network(const ExperimentConfig& cfg, const std::string& embedding_label, NeighborhoodKind kind) {
  NetworkConfig net = cfg.network;
  net.task = cfg.task;
  const EmbeddingSpec parsed = parse_embedding_label(embedding_label);
  EmbeddingSpec& e = net.encoder.embedding;
  e.kind = parsed.kind;
  e.correlation = parsed.correlation;
  e.activation = parsed.activation;
  net.encoder.neighborhood.kind = kind;
  return net;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Logger {
  std::ostream* out;
  std::mutex mu;
  template <class... T>
  void operator()(const T&... parts) {
    if (out == nullptr) return;
    std::lock_guard lock(mu);
    ((*out) << ... << parts) << '\n';
    out->flush();
  }
};

// Runs job(i) for i in [0, n) on up to `threads` workers.
template <class Job>
void parallel_for(std::size_t n, std::size_t threads, Job job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct RunOutcome {
  std::optional<MetricSummary> metrics;
  double seconds = 0.0;
  std::string error;
  std::vector<double> knn;
};

RunOutcome train_and_score(const NetworkConfig& net, const DatasetSplit& data, const TrainConfig& tc,
                           std::uint64_t seed) {
  RunOutcome out;
  const auto start = Clock::now();
  try {
    TrainResult r = train_loop(net, data.train, &data.test, tc, seed);
    out.metrics = r.final_eval;
    out.knn = r.config.encoder.knn_average_distance;
    if (!out.metrics) out.error = "no evaluation recorded";
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return out;
}

std::string metric_fields(const std::optional<MetricSummary>& m) {
  if (!m) return "failed,failed,failed";
  return format_number(m->overall_accuracy) + "," + format_number(m->mean_class_accuracy) + "," +
         format_number(m->mean_iou);
}

nlohmann::json metrics_json(const std::optional<MetricSummary>& m) {
  if (!m) return nullptr;
  return {{"oa", m->overall_accuracy}, {"macc", m->mean_class_accuracy}, {"miou", m->mean_iou}};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

nlohmann::json sidecar(const std::string& command, const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = to_json(cfg);
  j["deterministic"] = simd::deterministic_mode();
  j["wall_time_recorded"] = record_wall_time(cfg);
  return j;
}

std::vector<std::string> grid_labels(const ExperimentConfig& cfg) {
  if (!cfg.grid_embeddings.empty()) return cfg.grid_embeddings;
  std::vector<std::string> out;
  for (const auto& s : all_embedding_variants()) out.push_back(s.label());
  return out;
}

}  // namespace

std::vector<GridRow> run_grid(const ExperimentConfig& cfg, std::size_t threads, std::ostream* log) {
  validate(cfg);
  Logger say{log, {}};
  const DatasetSplit data = make_task_data(cfg);
  struct Cell {
    NeighborhoodKind kind;
    std::string label;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto kind : cfg.grid_neighborhoods)
    for (const auto& label : grid_labels(cfg))
      for (auto seed : cfg.seeds) cells.push_back({kind, label, seed});

  std::vector<GridRow> rows(cells.size());
  const bool wall = record_wall_time(cfg);
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    const Cell& c = cells[i];
    const NetworkConfig net = cell_network(cfg, c.label, c.kind);
    const RunOutcome r = train_and_score(net, data, cfg.train, c.seed);
    GridRow& row = rows[i];
    row.neighborhood = to_string(c.kind);
    row.embedding = net.encoder.embedding.family();
    row.variant = net.encoder.embedding.variant();
    row.seed = c.seed;
    row.metrics = r.metrics;
    row.error = r.error;
    row.knn_average_distance = r.knn;
    row.wall_seconds = wall ? r.seconds : 0.0;
    if (r.metrics) {
      say("grid ", row.neighborhood, " ", c.label, " seed ", c.seed, ": oa ", format_number(r.metrics->overall_accuracy),
          " (", format_number(r.seconds), " s)");
    } else {
      say("grid ", row.neighborhood, " ", c.label, " seed ", c.seed, ": FAILED ", r.error);
    }
  });
  std::sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    return std::tie(a.neighborhood, a.embedding, a.variant, a.seed) <
           std::tie(b.neighborhood, b.embedding, b.variant, b.seed);
  });
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<GridRow>& rows) {
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    SummaryRow s;
    s.neighborhood = rows[i].neighborhood;
    s.embedding = rows[i].embedding;
    s.variant = rows[i].variant;
    std::vector<double> oa, macc, miou;
    while (j < rows.size() && rows[j].neighborhood == s.neighborhood && rows[j].embedding == s.embedding &&
           rows[j].variant == s.variant) {
      ++s.runs;
      if (const auto& m = rows[j].metrics) {
        oa.push_back(m->overall_accuracy);
        macc.push_back(m->mean_class_accuracy);
        miou.push_back(m->mean_iou);
      } else {
        ++s.failed;
      }
      ++j;
    }
    auto stat = [](const std::vector<double>& v, double& mean, std::optional<double>& sd) {
      if (v.empty()) return;
      mean = deterministic_sum(v) / static_cast<double>(v.size());
      if (v.size() < 2) return;
      std::vector<double> sq;
      for (double x : v) sq.push_back((x - mean) * (x - mean));
      sd = std::sqrt(deterministic_sum(sq) / static_cast<double>(v.size() - 1));
    };
    stat(oa, s.oa_mean, s.oa_std);
    stat(macc, s.macc_mean, s.macc_std);
    stat(miou, s.miou_mean, s.miou_std);
    out.push_back(s);
    i = j;
  }
  return out;
}

std::string grid_csv(const std::vector<GridRow>& rows) {
  std::string s = "neighborhood,embedding,variant,seed,oa,macc,miou,wall_seconds\n";
  for (const auto& r : rows) {
    s += r.neighborhood + "," + r.embedding + "," + r.variant + "," + std::to_string(r.seed) + "," +
         metric_fields(r.metrics) + "," + format_number(r.wall_seconds) + "\n";
  }
  return s;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::string s = "neighborhood,embedding,variant,runs,failed,oa_mean,oa_std,macc_mean,macc_std,miou_mean,miou_std\n";
  for (const auto& r : rows) {
    const bool any = r.failed < r.runs;
    auto mean = [&](double v) { return any ? format_number(v) : std::string(); };
    s += r.neighborhood + "," + r.embedding + "," + r.variant + "," + std::to_string(r.runs) + "," +
         std::to_string(r.failed) + "," + mean(r.oa_mean) + "," + opt(r.oa_std) + "," + mean(r.macc_mean) + "," +
         opt(r.macc_std) + "," + mean(r.miou_mean) + "," + opt(r.miou_std) + "\n";
  }
  return s;
}

double support_zero_fraction(const EncoderConfig& encoder, std::size_t samples, std::uint64_t seed) {
  const double cell = encoder.cell_size(0);
  double radius = encoder.neighborhood.scale * cell;
  if (encoder.neighborhood.kind == NeighborhoodKind::Knn) {
    const double avg = encoder.knn_average_distance.empty() ? cell : encoder.knn_average_distance[0];
    radius = 2.0 * avg;
  }
  const Embedding e = make_embedding(encoder, cell, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> out(e.raw_dim());
  std::size_t zero = 0;
  for (std::size_t n = 0; n < samples;) {
    const Vec3 p{u(rng), u(rng), u(rng)};
    if (squared_norm(p) > 1.0) continue;
    embed_one(e, radius * p, out);
    if (std::all_of(out.begin(), out.end(), [](double v) { return v == 0.0; })) ++zero;
    ++n;
  }
  return static_cast<double>(zero) / static_cast<double>(samples);
}

std::vector<SigmaRow> run_sigma_sweep(const ExperimentConfig& cfg, std::size_t threads, std::ostream* log) {
  validate(cfg);
  Logger say{log, {}};
  ExperimentConfig base = cfg;
  base.task = Task::Classification;
  base.network.task = Task::Classification;
  const DatasetSplit data = make_task_data(base);
  const NetworkConfig resolved = resolve_network_config(base.network, data.train);

  struct Job {
    CorrelationKind corr;
    double factor;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto corr : cfg.sigma_correlations)
    for (double f : cfg.sigma_factors)
      for (auto seed : cfg.seeds) jobs.push_back({corr, f, seed});

  std::vector<SigmaRow> rows(jobs.size());
  const bool wall = record_wall_time(cfg);
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const Job& jb = jobs[i];
    NetworkConfig net = resolved;
    EmbeddingSpec& e = net.encoder.embedding;
    e.kind = EmbeddingKind::KernelPoint;
    e.correlation = jb.corr;
    e.sigma_factor = jb.factor;
    SigmaRow& row = rows[i];
    row.correlation = to_string(jb.corr);
    row.sigma_factor = jb.factor;
    row.seed = jb.seed;
    row.zero_fraction = support_zero_fraction(net.encoder, cfg.coverage_samples, derive_seed(cfg.data_seed, 500));
    const RunOutcome r = train_and_score(net, data, cfg.train, jb.seed);
    row.metrics = r.metrics;
    row.error = r.error;
    row.wall_seconds = wall ? r.seconds : 0.0;
    say("sigma ", row.correlation, " x", format_number(jb.factor), " seed ", jb.seed, ": ",
        r.metrics ? "oa " + format_number(r.metrics->overall_accuracy) : "FAILED " + r.error, ", zero fraction ",
        format_number(row.zero_fraction));
  });
  std::sort(rows.begin(), rows.end(), [](const SigmaRow& a, const SigmaRow& b) {
    return std::tie(a.correlation, a.sigma_factor, a.seed) < std::tie(b.correlation, b.sigma_factor, b.seed);
  });
  return rows;
}

std::string sigma_csv(const std::vector<SigmaRow>& rows) {
  std::string s = "correlation,sigma_factor,seed,oa,macc,miou,zero_fraction,wall_seconds\n";
  for (const auto& r : rows) {
    s += r.correlation + "," + format_number(r.sigma_factor) + "," + std::to_string(r.seed) + "," +
         metric_fields(r.metrics) + "," + format_number(r.zero_fraction) + "," + format_number(r.wall_seconds) + "\n";
  }
  return s;
}

std::vector<StatsRow> run_neighborhood_stats(const ExperimentConfig& cfg, std::ostream* log) {
  validate(cfg);
  Logger say{log, {}};
  EncoderConfig enc = cfg.network.encoder;
  enc.initial_cell = cfg.stats_initial_cell;
  enc.num_levels = cfg.stats_levels;
  enc.widths.assign(cfg.stats_levels, enc.widths.empty() ? 16 : enc.widths.front());
  enc.blocks_per_level.assign(cfg.stats_levels, 1);
  enc.knn_average_distance.clear();

  ClassificationDataConfig objects_cfg = cfg.classification;
  objects_cfg.points = cfg.stats_points;
  objects_cfg.train_per_class = (cfg.stats_clouds + 3) / 4;
  objects_cfg.test_per_class = 1;
  SegmentationDataConfig scenes_cfg = cfg.segmentation;
  scenes_cfg.train_scenes = cfg.stats_clouds;
  scenes_cfg.test_scenes = 1;
  scenes_cfg.points_per_shape = std::max<std::size_t>(1, cfg.stats_points / scenes_cfg.shapes_per_scene);

  struct Source {
    std::string name;
    std::vector<PointCloud> clouds;
  };
  std::vector<Source> sources;
  {
    auto objects = make_classification_dataset(objects_cfg, cfg.data_seed).train.clouds;
    objects.resize(cfg.stats_clouds);
    sources.push_back({"objects", std::move(objects)});
    auto scenes = make_segmentation_dataset(scenes_cfg, cfg.data_seed).train.clouds;
    sources.push_back({"scenes", std::move(scenes)});
  }

  std::vector<StatsRow> rows;
  for (auto& src : sources) {
    EncoderConfig knn_enc = enc;
    knn_enc.neighborhood.kind = NeighborhoodKind::Knn;
    const std::vector<double> r_prime = estimate_knn_average_distance(knn_enc, src.clouds);
    std::vector<FarthestDistancePool> knn_pool(enc.num_levels), ball_pool(enc.num_levels);
    NeighborhoodSpec ball_spec = enc.neighborhood;
    ball_spec.kind = NeighborhoodKind::BallQuery;
    for (const auto& cloud : src.clouds) {
      const Pyramid p = build_pyramid(knn_enc, cloud, false);
      for (std::size_t l = 0; l < enc.num_levels; ++l) {
        const double cell = enc.cell_size(l);
        const PointCloud& pts = p.levels[l];
        knn_pool[l].add(p.same[l], pts, pts, cell);
        ball_pool[l].add(select_neighbors(ball_spec, pts, pts, cell), pts, pts, cell);
      }
    }
    for (std::size_t l = 0; l < enc.num_levels; ++l) {
      for (int m = 0; m < 2; ++m) {
        const DistanceStats st = (m == 0 ? ball_pool : knn_pool)[l].stats();
        StatsRow row;
        row.dataset = src.name;
        row.method = m == 0 ? "ball" : "knn";
        row.level = l;
        row.cell_size = enc.cell_size(l);
        row.queries = st.count;
        row.mean = st.mean;
        row.variance = st.variance;
        row.knn_average_distance = l < r_prime.size() ? r_prime[l] : 0.0;
        rows.push_back(row);
      }
    }
    say("neigh-stats ", src.name, ": ", src.clouds.size(), " clouds");
  }
  std::sort(rows.begin(), rows.end(), [](const StatsRow& a, const StatsRow& b) {
    return std::tie(a.dataset, a.method, a.level) < std::tie(b.dataset, b.method, b.level);
  });
  return rows;
}

std::string stats_csv(const std::vector<StatsRow>& rows) {
  std::string s = "dataset,method,level,cell_size,queries,mean,variance,knn_average_distance\n";
  for (const auto& r : rows) {
    s += r.dataset + "," + r.method + "," + std::to_string(r.level) + "," + format_number(r.cell_size) + "," +
         std::to_string(r.queries) + "," + format_number(r.mean) + "," + format_number(r.variance) + "," +
         format_number(r.knn_average_distance) + "\n";
  }
  return s;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,step,lr,train_loss,eval_oa,eval_macc,eval_miou\n";
  for (const auto& e : log) {
    s += std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + format_number(e.lr) + "," +
         format_number(e.train_loss) + ",";
    if (e.eval) {
      s += format_number(e.eval->overall_accuracy) + "," + format_number(e.eval->mean_class_accuracy) + "," +
           format_number(e.eval->mean_iou);
    } else {
      s += ",,";
    }
    s += "\n";
  }
  return s;
}

std::vector<GridRow> cmd_grid(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::size_t threads,
                              std::ostream* log) {
  const auto rows = run_grid(cfg, threads, log);
  const auto summary = summarize(rows);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "grid.csv", grid_csv(rows));
  write_file(out_dir / "grid_summary.csv", summary_csv(summary));

  nlohmann::json j = sidecar("grid", cfg);
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"neighborhood", r.neighborhood}, {"embedding", r.embedding}, {"variant", r.variant},
                       {"seed", r.seed}, {"metrics", metrics_json(r.metrics)}};
    if (!r.error.empty()) row["error"] = r.error;
    if (!r.knn_average_distance.empty()) row["knn_average_distance"] = r.knn_average_distance;
    j["rows"].push_back(row);
  }
  write_file(out_dir / "grid.json", j.dump(2) + "\n");
  return rows;
}

std::vector<SigmaRow> cmd_sigma_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                      std::size_t threads, std::ostream* log) {
  const auto rows = run_sigma_sweep(cfg, threads, log);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "sigma_sweep.csv", sigma_csv(rows));
  nlohmann::json j = sidecar("sigma-sweep", cfg);
  j["failures"] = nlohmann::json::array();
  for (const auto& r : rows)
    if (!r.metrics)
      j["failures"].push_back({{"correlation", r.correlation}, {"sigma_factor", r.sigma_factor}, {"seed", r.seed},
                               {"error", r.error}});
  write_file(out_dir / "sigma_sweep.json", j.dump(2) + "\n");
  return rows;
}

std::vector<StatsRow> cmd_neighborhood_stats(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                             std::ostream* log) {
  const auto rows = run_neighborhood_stats(cfg, log);
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "neigh_stats.csv", stats_csv(rows));
  nlohmann::json j = sidecar("neigh-stats", cfg);
  // one global r' per dataset: the level-0 value, which sets the kNN kernel scale
  for (const auto& r : rows)
    if (r.level == 0 && r.method == "knn") j["knn_average_distance"][r.dataset] = r.knn_average_distance;
  write_file(out_dir / "neigh_stats.json", j.dump(2) + "\n");
  return rows;
}

TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log) {
  validate(cfg);
  Logger say{log, {}};
  const DatasetSplit data = make_task_data(cfg);
  NetworkConfig net = cfg.network;
  net.task = cfg.task;
  const std::uint64_t seed = cfg.seeds.front();
  TrainResult r = train_loop(net, data.train, &data.test, cfg.train, seed, [&](const EpochLog& e) {
    say("epoch ", e.epoch, " lr ", format_number(e.lr), " loss ", format_number(e.train_loss),
        e.eval ? " oa " + format_number(e.eval->overall_accuracy) : std::string());
  });
  std::filesystem::create_directories(out_dir);
  save_model(out_dir / "model.pne", r.config, r.params);
  write_file(out_dir / "train_log.csv", training_log_csv(r.log));
  nlohmann::json j = sidecar("train", cfg);
  j["seed"] = seed;
  j["parameters"] = parameter_count(r.params);
  j["final_eval"] = metrics_json(r.final_eval);
  j["knn_average_distance"] = r.config.encoder.knn_average_distance;
  write_file(out_dir / "train.json", j.dump(2) + "\n");
  return r;
}

MetricSummary cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& model,
                       const std::filesystem::path& out_dir, std::ostream* log) {
  validate(cfg);
  Logger say{log, {}};
  NetworkConfig net = cfg.network;
  net.task = cfg.task;
  NetworkParams params = load_model(model, net);
  const DatasetSplit data = make_task_data(cfg);
  const MetricSummary m = metrics_compute(evaluate(net, params, data.test));
  say("eval ", model.string(), ": oa ", format_number(m.overall_accuracy), " macc ",
      format_number(m.mean_class_accuracy), " miou ", format_number(m.mean_iou));
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "eval.csv", "task,samples,oa,macc,miou\n" + std::string(to_string(cfg.task)) + "," +
                                       std::to_string(data.test.size()) + "," + metric_fields(m) + "\n");
  nlohmann::json j = sidecar("eval", cfg);
  j["model"] = model.string();
  j["metrics"] = metrics_json(m);
  write_file(out_dir / "eval.json", j.dump(2) + "\n");
  return m;
}

}  // namespace pne
