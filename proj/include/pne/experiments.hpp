#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pne/config.hpp"

namespace pne {

// Harness commands behind pne_bench. Each writes CSV plus a JSON sidecar
// holding the resolved config, and returns the rows it wrote.

struct GridRow {
  std::string neighborhood;  // "knn" / "ball"
  std::string embedding;     // "kp" / "mlp" / "none"
  std::string variant;       // "gaussian", "relu", ... or "" for none
  std::uint64_t seed = 0;
  std::optional<MetricSummary> metrics;  // empty = failed cell
  double wall_seconds = 0.0;
  std::string error;
  std::vector<double> knn_average_distance;  // resolved r' per level (kNN cells)
};

struct SummaryRow {
  std::string neighborhood, embedding, variant;
  std::size_t runs = 0;
  std::size_t failed = 0;
  double oa_mean = 0, macc_mean = 0, miou_mean = 0;
  // sample std (n - 1); absent below two successful runs
  std::optional<double> oa_std, macc_std, miou_std;
};

struct SigmaRow {
  std::string correlation;
  double sigma_factor = 0.0;
  std::uint64_t seed = 0;
  std::optional<MetricSummary> metrics;
  double zero_fraction = 0.0;
  double wall_seconds = 0.0;
  std::string error;
};

struct StatsRow {
  std::string dataset;  // "objects" / "scenes"
  std::string method;   // "knn" / "ball"
  std::size_t level = 0;
  double cell_size = 0.0;
  std::size_t queries = 0;
  double mean = 0.0;
  double variance = 0.0;
  double knn_average_distance = 0.0;  // r' at this level (same for both methods)
};

// Wall time is recorded unless PNE_DETERMINISTIC=1 or record_wall_time=false.
bool record_wall_time(const ExperimentConfig& cfg);

DatasetSplit make_task_data(const ExperimentConfig& cfg);

// Network config for one grid cell; keeps sigma factor, MLP width and
// placement from the base embedding spec.
NetworkConfig cell_network(const ExperimentConfig& cfg, const std::string& embedding_label, NeighborhoodKind kind);

std::vector<GridRow> run_grid(const ExperimentConfig& cfg, std::size_t threads, std::ostream* log = nullptr);
std::vector<SummaryRow> summarize(const std::vector<GridRow>& rows);
std::string grid_csv(const std::vector<GridRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);

// Fraction of offsets drawn uniformly in the level-0 receptive ball whose
// embedding is entirely zero.
double support_zero_fraction(const EncoderConfig& encoder, std::size_t samples, std::uint64_t seed);

std::vector<SigmaRow> run_sigma_sweep(const ExperimentConfig& cfg, std::size_t threads, std::ostream* log = nullptr);
std::string sigma_csv(const std::vector<SigmaRow>& rows);

std::vector<StatsRow> run_neighborhood_stats(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::string stats_csv(const std::vector<StatsRow>& rows);

std::string training_log_csv(const std::vector<EpochLog>& log);

// Full commands: write files into out_dir (created if needed).
std::vector<GridRow> cmd_grid(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::size_t threads,
                              std::ostream* log = nullptr);
std::vector<SigmaRow> cmd_sigma_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                      std::size_t threads, std::ostream* log = nullptr);
std::vector<StatsRow> cmd_neighborhood_stats(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                             std::ostream* log = nullptr);
// Trains one model on the first seed; writes model.pne and train_log.csv.
TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* log = nullptr);
// Scores a saved model on the test split; writes eval.csv.
MetricSummary cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& model,
                       const std::filesystem::path& out_dir, std::ostream* log = nullptr);

std::string format_number(double v);

}  // namespace pne
