#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfl {

// Vector/matrix shapes that do not chain.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration values, unknown scenario/method names, conflicting flags.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training loop produced a non-finite loss at `iteration` (epoch for
// regression fits).
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : NumericError(what), iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

// Malformed model / spec / config files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfl
