#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maternest {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An iterative evaluation stopped before reaching its accuracy target.
class AccuracyError : public std::runtime_error {
 public:
  AccuracyError(const std::string& what, double achieved)
      : std::runtime_error(what), achieved_(achieved) {}

  double achieved() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// Two or more design points coincide.
class DegenerateDesignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A kernel matrix turned out numerically singular: a Cholesky pivot was
/// non-positive, or a posterior variance came out negative beyond rounding.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, std::size_t pivot_index,
                    double pivot_value)
      : std::runtime_error(what),
        pivot_index_(pivot_index),
        pivot_value_(pivot_value) {}

  /// Zero-based index of the failing pivot (the first point whose
  /// incremental variance is not positive).
  std::size_t pivot_index() const noexcept { return pivot_index_; }
  double pivot_value() const noexcept { return pivot_value_; }

 private:
  std::size_t pivot_index_;
  double pivot_value_;
};

/// Every candidate of a parameter search failed.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace maternest
