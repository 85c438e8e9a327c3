#pragma once

#include <stdexcept>
#include <string>

namespace sepitfp {

// Error taxonomy mirrored by the C API status codes.

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FitError : std::runtime_error {
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sepitfp
