#pragma once

#include <stdexcept>
#include <string>

namespace nrf {

// Shapes, dimensions or arguments that violate an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf or runaway values produced during evaluation or sampling.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration, checkpoint or CSV input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nrf
