#pragma once

#include <stdexcept>
#include <string>

namespace framemae {

// Failure classes map onto CLI exit codes: config -> 2, format/shape -> 3,
// numeric -> 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : FormatError {
  explicit ShapeError(const std::string& msg) : FormatError(msg) {}
};

struct UnsupportedError : FormatError {
  explicit UnsupportedError(const std::string& msg) : FormatError(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace framemae
