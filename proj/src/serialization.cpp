#include "pne/serialization.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "pne/errors.hpp"

namespace pne {

namespace {

constexpr char kMagic[8] = {'P', 'N', 'E', 'M', 'O', 'D', 'E', 'L'};
constexpr char kKnnMeta[] = "meta.knn_average_distance";

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated model file reading ") + what);
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::uint64_t n = 1;
    for (auto d : t.shape) n *= d;
    if (n != t.values.size()) throw DimensionError("tensor " + t.name + " shape does not match its value count");
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
  }
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing model tensors");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError("not a model file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion) throw FormatError("unsupported model version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in, "tensor count");
  std::vector<NamedTensor> tensors(count);
  for (auto& t : tensors) {
    const auto len = get<std::uint32_t>(in, "name length");
    if (len > 4096) throw FormatError("implausible tensor name length");
    t.name.resize(len);
    if (!in.read(t.name.data(), len)) throw FormatError("truncated tensor name");
    const auto rank = get<std::uint32_t>(in, "rank");
    if (rank > 8) throw FormatError("implausible rank for " + t.name);
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(get<std::uint64_t>(in, "dimension"));
      n *= t.shape.back();
    }
    if (n > (std::uint64_t{1} << 32)) throw FormatError("implausible size for " + t.name);
    t.values.resize(n);
  }
  for (auto& t : tensors) {
    if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)))) {
      throw FormatError("truncated values for " + t.name);
    }
  }
  return tensors;
}

std::vector<NamedTensor> export_model(const NetworkConfig& config, NetworkParams& params) {
  std::vector<NamedTensor> out;
  for (const ParamView& v : parameters(params)) {
    NamedTensor t;
    t.name = v.name;
    t.shape.assign(v.shape.begin(), v.shape.end());
    t.values.assign(v.values.begin(), v.values.end());
    out.push_back(std::move(t));
  }
  const auto& knn = config.encoder.knn_average_distance;
  if (!knn.empty()) out.push_back({kKnnMeta, {knn.size()}, knn});
  return out;
}

void import_params(const std::vector<NamedTensor>& tensors, NetworkParams& params) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (const ParamView& v : parameters(params)) {
    const auto it = by_name.find(v.name);
    if (it == by_name.end()) throw FormatError("model file lacks tensor " + v.name);
    const NamedTensor& t = *it->second;
    if (!std::equal(t.shape.begin(), t.shape.end(), v.shape.begin(), v.shape.end())) {
      throw DimensionError("tensor " + v.name + " has a different shape in the model file");
    }
    std::copy(t.values.begin(), t.values.end(), v.values.begin());
  }
}

void save_model(const std::filesystem::path& path, const NetworkConfig& config, NetworkParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_tensors(out, export_model(config, params));
}

NetworkParams load_model(const std::filesystem::path& path, NetworkConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  const auto tensors = read_tensors(in);
  for (const auto& t : tensors) {
    if (t.name == kKnnMeta) config.encoder.knn_average_distance = t.values;
  }
  NetworkParams params = init_network(config, 0);
  import_params(tensors, params);
  return params;
}

}  // namespace pne
