#pragma once

#include <stdexcept>
#include <string>

namespace lsnn {

// Dimension or shape mismatch between arguments.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A parameter outside its admissible range (eps <= 0, gamma not in (0,1), ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Advection field vanishes on a boundary face, so the face cannot be classified.
class DegenerateFaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf during training or assembly.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unknown configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lsnn
