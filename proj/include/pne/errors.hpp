#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pne {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite input to a pure function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid scalar parameter (non-positive radius, k = 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Neighbor or element index out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Statistic requested over an empty population.
class StatisticsError : public Error {
 public:
  using Error::Error;
};

// Network input that collapses to nothing (e.g. an empty pyramid level).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input (model files).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during optimization.
class TrainingFault : public Error {
 public:
  TrainingFault(const std::string& tensor, const std::string& what);
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

// Malformed text input; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid experiment configuration; carries the dotted key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key_path, const std::string& what);
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace pne
