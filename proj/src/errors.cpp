#include "pne/errors.hpp"

namespace pne {

TrainingFault::TrainingFault(const std::string& tensor, const std::string& what)
    : Error("training fault in '" + tensor + "': " + what), tensor_(tensor) {}

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

ConfigError::ConfigError(const std::string& key_path, const std::string& what)
    : Error("config key '" + key_path + "': " + what), key_path_(key_path) {}

}  // namespace pne
