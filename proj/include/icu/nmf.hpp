#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "icu/kernel.hpp"
#include "icu/parallel.hpp"
#include "icu/uncertainty.hpp"

namespace icu {

/// Initial factors for one start of the block-coordinate descent.
struct NmfStart {
  Eigen::MatrixXd u;
  Eigen::MatrixXd w;
};

/// min ||T0 - U W^T||_F^2 with rows of U and columns of W on the unit simplex.
struct NmfProblem {
  TransitionKernel target;
  int rank = 1;
  /// Total number of starts, including the SPA start and any warm starts.
  int starts = 1000;
  /// Maximum number of sweeps per start.
  int iters = 2000;
  /// A start stops after 10 consecutive sweeps with relative objective improvement below tol.
  double tol = 1e-10;
  /// Projected-gradient steps per block within one sweep.
  int inner_steps = 5;
  std::vector<NmfStart> warm_starts;

  void validate() const;
};

struct NmfResiduals {
  /// Entrywise sum of |T0 - T_hat|.
  double l1 = 0.0;
  /// Largest entry of |T0 - T_hat|.
  double linf = 0.0;
  /// Largest |T0 - T_hat| / T0 over entries with T0 > 0.
  double relative_max = 0.0;
};

struct NmfSolution {
  Eigen::MatrixXd u;
  Eigen::MatrixXd w;
  double objective = 0.0;
  NmfResiduals residuals;
  int start_index = 0;
  int sweeps = 0;
  /// Objective after every sweep of the winning start, preceded by its initial objective.
  std::vector<double> trace;

  Eigen::MatrixXd approximation() const { return u * w.transpose(); }
  /// Factor model with every factor set collapsed to its nominal column.
  FactorModel nominal_model() const;
};

/// Euclidean projection onto the unit simplex by sorting and thresholding.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// ||T0 - U W^T||_F^2.
double nmf_objective(const Eigen::MatrixXd& target, const Eigen::MatrixXd& u, const Eigen::MatrixXd& w);

NmfResiduals nmf_residuals(const Eigen::MatrixXd& target, const Eigen::MatrixXd& approximation);

/// Successive-projection start: W holds the r most extreme rows of T0, U the projected least-squares weights.
NmfStart spa_start(const Eigen::MatrixXd& target, int rank);

/**
 * Runs block-coordinate descent from every start of the problem and keeps the best result.
 *
 * Start 0 is the SPA start, then the warm starts, then Dirichlet(1) draws seeded by
 * `derive_seed(seed, index)`. The winner minimizes (objective, start index), so the result does
 * not depend on `exec`. Throws `ConvergenceError` if the objective ever increases during a sweep.
 */
NmfSolution nmf_factorize(const NmfProblem& problem, std::uint64_t seed, Exec exec = Exec::parallel);

/// Single descent run from given factors.
NmfSolution nmf_refine(const Eigen::MatrixXd& target, const NmfStart& start, int iters, double tol, int inner_steps = 5);

/**
 * Factorizations at ranks r_lo..r_hi where each rank is also started from the previous best,
 * padded with a zero-weight factor, so best objectives are non-increasing in the rank.
 */
std::vector<NmfSolution> nmf_rank_path(const NmfProblem& base, int r_lo, int r_hi, std::uint64_t seed,
                                       Exec exec = Exec::parallel);

struct DeviationStats {
  double max = 0.0;
  double mean = 0.0;
  double median = 0.0;
  /// Nearest-rank 95th percentile.
  double p95 = 0.0;
};

DeviationStats deviation_stats(std::vector<double> values);

struct ResidualReport {
  DeviationStats absolute;
  /// Over entries with T0 > 0.
  DeviationStats relative;
  /// (T0 - T_hat) / alpha_i.
  Eigen::MatrixXd ratios;
  DeviationStats abs_ratio;
  /// T_hat lies in [T0 - alpha_i, T0 + 2 alpha_i], that is ratio in [-2, 1].
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> in_interval;
  int out_of_interval = 0;
  /// Entry with the largest |ratio|.
  int worst_row = 0;
  int worst_col = 0;
};

ResidualReport residual_report(const Eigen::MatrixXd& approximation, const TransitionKernel& target,
                               const Eigen::VectorXd& alpha);

/// min ||T - U W^T||_F^2 over W with simplex columns and U fixed, by projected gradient from `w0`.
Eigen::MatrixXd solve_factors_fixed_u(const Eigen::MatrixXd& target, const Eigen::MatrixXd& u, const Eigen::MatrixXd& w0,
                                      int max_iter = 5000, double tol = 1e-13);

/**
 * Empirical factor boxes: q kernels drawn uniformly in [T0 - alpha_i, T0 + 2 alpha_i] (rows
 * projected back to the simplex) are refit with U fixed, and factor l gets the box
 * w_hat_l +- 1.96 sigma_l / sqrt(q) clipped to [0, 1]. Sample m uses `derive_seed(seed, m)`.
 */
std::vector<BoxSimplexSet> bootstrap_factor_sets(const TransitionKernel& target, const Eigen::VectorXd& alpha,
                                                 const Eigen::MatrixXd& u, const Eigen::MatrixXd& w_hat, int q,
                                                 std::uint64_t seed, Exec exec = Exec::parallel);

/// Factor model with boxes [w_hat - alpha_min, w_hat + 2 alpha_min] clipped to [0, 1].
FactorModel build_u_min(const NmfSolution& solution, const Eigen::VectorXd& alpha);

}  // namespace icu
