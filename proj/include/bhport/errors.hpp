#pragma once

#include <stdexcept>
#include <string>

namespace bhport {

// Base for all library errors. The CLI maps subclasses to process exit codes:
// ConfigError -> 2, DataError -> 3, NumericalError / MetricError -> 4.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration, CLI usage, or out-of-domain parameter values.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed or inconsistent input data; message carries file/row context.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failure (factorization breakdown, rank deficiency, divergence).
// pivot_index >= 0 identifies the failing Cholesky pivot when known.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg, int pivot_index = -1)
      : Error(msg), pivot_index_(pivot_index) {}
  int pivot_index() const { return pivot_index_; }

 private:
  int pivot_index_;
};

// A metric is undefined on the given inputs (zero benchmark SSE, zero variance).
class MetricError : public NumericalError {
 public:
  explicit MetricError(const std::string& msg) : NumericalError(msg) {}
};

// A constraint set admits no feasible point; message names the binding constraint.
class FeasibilityError : public Error {
 public:
  explicit FeasibilityError(const std::string& msg) : Error(msg) {}
};

}  // namespace bhport
