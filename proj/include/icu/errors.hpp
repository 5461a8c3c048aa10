#pragma once

#include <exception>
#include <stdexcept>
#include <string>

namespace icu {

/// Malformed input, violated precondition or schema failure.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative method exhausted its iteration budget.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An empty feasible set or a singular system with no solution.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Process exit code for the error class of `e`: 2 validation, 3 convergence, 4 infeasibility, 1 otherwise.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace icu
