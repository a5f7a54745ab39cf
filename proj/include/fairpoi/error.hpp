#pragma once

#include <stdexcept>
#include <string>

namespace fairpoi {

// Error categories map onto CLI exit codes: ConfigError -> 1, DataError -> 2,
// anything else -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: flags, config keys, weight ranges, malformed grids.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Bad data: malformed rows, dangling references, degenerate inputs.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// A model was asked to do something the dataset cannot support.
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& msg) : Error(msg) {}
};

}  // namespace fairpoi
