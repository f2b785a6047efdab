#pragma once

#include <stdexcept>
#include <string>

namespace spheremap {

/// Bad shapes, bad configuration values, unparseable input. CLI exit code 2.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A model assumption does not hold for the given data (e.g. a group at least
/// as large as the embedding dimension). CLI exit code 3.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: rank deficiency, non-convergence. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spheremap
