#pragma once

#include <stdexcept>
#include <string>

namespace mmfx {

// Base for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / contract violations.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad configuration (JSON configs, conv geometry, unknown keys).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf detected, singular systems, undefined statistics.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed input data (CSV rows, vocab mismatches, missing files).
struct InputError : Error {
  explicit InputError(const std::string& msg) : Error(msg) {}
};

}  // namespace mmfx
