#include "pne/pointio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pne/errors.hpp"

namespace pne {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_real(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "expected a number, got '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(line, "non-finite coordinate '" + std::string(tok) + "'");
  return v;
}

int parse_label(std::string_view tok, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "expected an integer label, got '" + std::string(tok) + "'");
  }
  if (v < 0) throw ParseError(line, "negative label");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_point(std::ostream& out, const PointCloud& cloud, std::size_t i) {
  const Vec3& p = cloud.positions[i];
  out << p[0] << ' ' << p[1] << ' ' << p[2];
  if (cloud.labels) out << ' ' << (*cloud.labels)[i];
  out << '\n';
}

}  // namespace

PointCloud read_xyz(std::istream& in) {
  PointCloud cloud;
  std::vector<int> labels;
  std::size_t columns = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0].front() == '#') continue;
    if (toks.size() != 3 && toks.size() != 4) {
      throw ParseError(lineno, "expected 3 or 4 columns, got " + std::to_string(toks.size()));
    }
    if (columns == 0) columns = toks.size();
    if (toks.size() != columns) {
      throw ParseError(lineno, "column count changed from " + std::to_string(columns) + " to " +
                                   std::to_string(toks.size()));
    }
    cloud.positions.push_back({parse_real(toks[0], lineno), parse_real(toks[1], lineno), parse_real(toks[2], lineno)});
    if (columns == 4) labels.push_back(parse_label(toks[3], lineno));
  }
  if (columns == 4) cloud.labels = std::move(labels);
  return cloud;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_xyz(in);
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) write_point(out, cloud, i);
  out.precision(old);
}

void write_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_xyz(out, cloud);
}

PointCloud read_ply_ascii(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };

  if (!next() || split_ws(line) != std::vector<std::string_view>{"ply"}) throw ParseError(1, "missing 'ply' magic");
  if (!next()) throw ParseError(lineno + 1, "missing format line");
  {
    const auto t = split_ws(line);
    if (t.size() != 3 || t[0] != "format" || t[1] != "ascii") throw ParseError(lineno, "only 'format ascii 1.0' is supported");
  }

  std::size_t count = 0;
  bool have_vertex = false;
  std::vector<std::string> props;
  while (true) {
    if (!next()) throw ParseError(lineno + 1, "header ended without end_header");
    const auto t = split_ws(line);
    if (t.empty()) continue;
    if (t[0] == "comment" || t[0] == "obj_info") continue;
    if (t[0] == "end_header") break;
    if (t[0] == "element") {
      if (t.size() != 3) throw ParseError(lineno, "malformed element line");
      if (t[1] != "vertex" || have_vertex) throw ParseError(lineno, "only a single 'vertex' element is supported");
      have_vertex = true;
      const auto [ptr, ec] = std::from_chars(t[2].data(), t[2].data() + t[2].size(), count);
      if (ec != std::errc() || ptr != t[2].data() + t[2].size()) throw ParseError(lineno, "bad vertex count");
      continue;
    }
    if (t[0] == "property") {
      if (!have_vertex) throw ParseError(lineno, "property before element");
      if (t.size() != 3 || t[1] == "list") throw ParseError(lineno, "only scalar properties are supported");
      props.emplace_back(t[2]);
      continue;
    }
    throw ParseError(lineno, "unexpected header keyword '" + std::string(t[0]) + "'");
  }
  if (!have_vertex) throw ParseError(lineno, "header declares no vertex element");
  int ix = -1, iy = -1, iz = -1, il = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const int k = static_cast<int>(i);
    if (props[i] == "x") ix = k;
    else if (props[i] == "y") iy = k;
    else if (props[i] == "z") iz = k;
    else if (props[i] == "label") il = k;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(lineno, "vertex element lacks x, y or z");

  PointCloud cloud;
  std::vector<int> labels;
  cloud.positions.reserve(count);
  while (cloud.positions.size() < count) {
    if (!next()) {
      throw ParseError(lineno + 1, "expected " + std::to_string(count) + " vertices, found " +
                                       std::to_string(cloud.positions.size()));
    }
    const auto t = split_ws(line);
    if (t.size() != props.size()) {
      throw ParseError(lineno, "expected " + std::to_string(props.size()) + " values, got " + std::to_string(t.size()));
    }
    cloud.positions.push_back({parse_real(t[ix], lineno), parse_real(t[iy], lineno), parse_real(t[iz], lineno)});
    if (il >= 0) labels.push_back(parse_label(t[il], lineno));
  }
  while (next()) {
    if (!split_ws(line).empty()) {
      throw ParseError(lineno, "data beyond the declared " + std::to_string(count) + " vertices");
    }
  }
  if (il >= 0) cloud.labels = std::move(labels);
  return cloud;
}

PointCloud read_ply_ascii(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_ply_ascii(in);
}

void write_ply_ascii(std::ostream& out, const PointCloud& cloud) {
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.labels) out << "property int label\n";
  out << "end_header\n";
  const auto old = out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) write_point(out, cloud, i);
  out.precision(old);
}

void write_ply_ascii(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_ply_ascii(out, cloud);
}

}  // namespace pne
