#ifndef RANKEDCL_ERRORS_HPP
#define RANKEDCL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rankedcl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input is numerically degenerate (zero-norm row, batch without positives, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A domain invariant is violated by user-provided data or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A metric is not defined for the given inputs (empty ground truth, one ROC population).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Command line misuse.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace rankedcl

#endif  // RANKEDCL_ERRORS_HPP
