#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pne/network.hpp"

namespace pne {

// Flat tensor file:
//   "PNEMODEL" | u32 version | u32 count
//   count x { u32 name_len | name bytes | u32 rank | rank x u64 dim }
//   all values, f64, tensor order, little-endian
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

// Parameters plus "meta.knn_average_distance" when set.
std::vector<NamedTensor> export_model(const NetworkConfig& config, NetworkParams& params);

// Copies tensors into params by name; every parameter must be present with
// a matching shape. Extra tensors under "meta." are ignored.
void import_params(const std::vector<NamedTensor>& tensors, NetworkParams& params);

void save_model(const std::filesystem::path& path, const NetworkConfig& config, NetworkParams& params);

// Rebuilds the network from config (restoring stored kNN distances) and
// loads the saved values.
NetworkParams load_model(const std::filesystem::path& path, NetworkConfig& config);

}  // namespace pne
