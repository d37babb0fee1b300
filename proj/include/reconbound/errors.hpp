#pragma once

#include <stdexcept>
#include <string>

namespace reconbound {

// Bad or inconsistent configuration (CLI flags, JSON config, shapes).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

// Unreadable or malformed input data (IDX files, checkpoints).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

// Numerical failure: non-finite values, non-convergence, singular systems.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

// Requested an operation outside the differentiable subset.
struct NonSmoothError : std::logic_error {
  explicit NonSmoothError(const std::string& m) : std::logic_error(m) {}
};

}  // namespace reconbound
