#pragma once

#include <stdexcept>
#include <string>

namespace dacount {

// Shape or rank mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: non-scalar loss, consumed tape, missing gradient.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-supplied configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or missing input data (annotations, images, density maps).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or similar failure during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dacount
