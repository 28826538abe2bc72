#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kanlab {

/// Base for failures that indicate a numerical problem rather than bad input.
/// The CLI maps these to exit code 3; std::invalid_argument maps to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RankDeficientError : public NumericalError {
 public:
  RankDeficientError(std::size_t column, const std::string& what)
      : NumericalError(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Spline collocation with knot intervals that contain no samples.
class CoverageError : public NumericalError {
 public:
  CoverageError(std::vector<int> empty_intervals, const std::string& what)
      : NumericalError(what), empty_(std::move(empty_intervals)) {}
  const std::vector<int>& empty_intervals() const noexcept { return empty_; }

 private:
  std::vector<int> empty_;
};

class NonFiniteGradientError : public NumericalError {
 public:
  NonFiniteGradientError(long step, std::size_t index)
      : NumericalError("non-finite gradient at step " + std::to_string(step) +
                       ", parameter " + std::to_string(index)),
        step_(step),
        index_(index) {}
  long step() const noexcept { return step_; }
  std::size_t index() const noexcept { return index_; }

 private:
  long step_;
  std::size_t index_;
};

class NotConvertibleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConstructionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BoundFailureError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class UnsupportedOpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace kanlab
