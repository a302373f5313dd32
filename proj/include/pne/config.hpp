#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "pne/datagen.hpp"
#include "pne/network.hpp"
#include "pne/training.hpp"

namespace pne {

// Line-oriented config text: [section] headers, key = value pairs, '#'
// comments. Grammar in docs/formats.md.
struct IniEntry {
  std::string value;
  std::size_t line = 0;
};

struct IniDocument {
  // section -> key -> entry; keys before any header live in section "".
  std::map<std::string, std::map<std::string, IniEntry>> sections;
};

// Throws ParseError with the offending line number.
IniDocument parse_ini(std::string_view text);

struct ExperimentConfig {
  Task task = Task::Classification;
  NetworkConfig network;
  TrainConfig train;
  ClassificationDataConfig classification;
  SegmentationDataConfig segmentation;
  std::uint64_t data_seed = 7;
  std::vector<std::uint64_t> seeds{0};
  std::string output = "results";
  bool record_wall_time = true;

  // grid
  std::vector<std::string> grid_embeddings;  // labels; empty = all seven
  std::vector<NeighborhoodKind> grid_neighborhoods{NeighborhoodKind::Knn, NeighborhoodKind::BallQuery};
  // sigma sweep
  std::vector<double> sigma_factors{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<CorrelationKind> sigma_correlations{CorrelationKind::Triangular, CorrelationKind::Gaussian};
  std::size_t coverage_samples = 100000;
  // neighborhood statistics
  std::size_t stats_clouds = 50;
  std::size_t stats_levels = 5;
  double stats_initial_cell = 0.05;
  std::size_t stats_points = 32768;  // dense enough that level 0 is actually subsampled
};

// Desk-scale defaults (3 levels, widths 16/32/64, initial cell 0.2 m).
ExperimentConfig default_experiment_config();

// Applies a parsed document on top of the defaults. Unknown sections/keys and
// bad values throw ConfigError with the dotted key path.
ExperimentConfig resolve_experiment(const IniDocument& doc);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// Checks cross-field invariants; throws ConfigError.
void validate(const ExperimentConfig& cfg);

// Text that resolve_experiment(parse_ini(...)) maps back to the same config.
std::string to_ini(const ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace pne
