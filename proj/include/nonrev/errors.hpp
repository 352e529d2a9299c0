#pragma once
#include <stdexcept>
#include <string>

namespace nonrev {

// Failure of a numerical routine on valid input (non-finite solve, envelope violation, ...).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& m) : std::runtime_error(m) {}
};

// Malformed experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace nonrev
