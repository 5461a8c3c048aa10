#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace icu {

/// Offsets of the three exit columns relative to n.
enum Exit : int { kCR = 0, kRL = 1, kD = 2 };

/**
 * Row-stochastic transition matrix over severity scores plus exit columns.
 *
 * Row i (0-based) is the next-period distribution of a patient in score i+1.
 * Columns 0..n-1 are severity scores, columns n, n+1, n+2 are CR, RL and D.
 */
class TransitionKernel {
 public:
  TransitionKernel() = default;

  /// Validates shape n x (n+3), nonnegativity and unit row sums within `tol`.
  explicit TransitionKernel(Eigen::MatrixXd rows, double tol = 1e-12);

  /// Clips tiny negative entries to zero and rescales rows to sum to one before validating.
  static TransitionKernel normalized(Eigen::MatrixXd rows);

  int n() const { return static_cast<int>(rows_.rows()); }
  int cols() const { return static_cast<int>(rows_.cols()); }
  const Eigen::MatrixXd& matrix() const { return rows_; }
  double operator()(int i, int j) const { return rows_(i, j); }

  int col(Exit e) const { return n() + static_cast<int>(e); }
  double exit(int i, Exit e) const { return rows_(i, col(e)); }

  /// Ward block Q (n x n).
  Eigen::MatrixXd ward_block() const { return rows_.leftCols(n()); }
  /// Exit block R (n x 3).
  Eigen::MatrixXd exit_block() const { return rows_.rightCols(3); }

  /// Per-row probability of staying in the ward, sum over the score columns.
  Eigen::VectorXd ward_mass() const;

  /// min_i min{T[i,CR], T[i,RL], T[i,D]}.
  double exit_mass() const;

  /// min_i (T[i,CR] + T[i,RL] + T[i,D]); positive iff every row can leave the ward in one step.
  double min_total_exit() const;

  /// Label of column j: "S1".."Sn", "CR", "RL", "D".
  std::string column_label(int j) const;

 private:
  Eigen::MatrixXd rows_;
};

/// Label of state j in an n-score model, with the same convention as `TransitionKernel::column_label`.
std::string state_label(int n, int j);

/// Parses a state label back into a column index; throws `ValidationError` on unknown labels.
int parse_state_label(int n, const std::string& label);

/// Nonnegative vector summing to one within `tol`; throws `ValidationError` otherwise.
void validate_distribution(const Eigen::VectorXd& p, double tol, const std::string& what);

}  // namespace icu
