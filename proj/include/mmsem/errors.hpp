#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmsem {

/// Invalid arguments or violated preconditions at a public entry point.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Permeability tensor that is not symmetric positive definite at an evaluation point.
class MaterialError : public std::runtime_error {
 public:
  MaterialError(const std::string& what, double x, double y)
      : std::runtime_error(what + " at (" + std::to_string(x) + ", " + std::to_string(y) + ")"),
        x_(x),
        y_(y) {}

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }

 private:
  double x_;
  double y_;
};

/// Boundary data that cannot be satisfied (e.g. incompatible all-flux boundary conditions).
class IllPosedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Breakdown of the saddle-point factorization.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::ptrdiff_t pivot)
      : std::runtime_error(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}

  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

/// Iterative root finding that did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmsem
