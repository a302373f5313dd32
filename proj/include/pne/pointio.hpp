#pragma once

#include <filesystem>
#include <iosfwd>

#include "pne/geometry.hpp"

namespace pne {

// Plain-text point formats; the grammar is in docs/formats.md.
// Readers throw ParseError carrying the 1-based line number.

PointCloud read_xyz(std::istream& in);
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_xyz(const std::filesystem::path& path, const PointCloud& cloud);

PointCloud read_ply_ascii(std::istream& in);
PointCloud read_ply_ascii(const std::filesystem::path& path);
void write_ply_ascii(std::ostream& out, const PointCloud& cloud);
void write_ply_ascii(const std::filesystem::path& path, const PointCloud& cloud);

}  // namespace pne
