#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "icu/kernel.hpp"
#include "icu/parallel.hpp"

namespace icu {

/**
 * Patient trajectories over kernel columns: 0..n-1 are scores, n + Exit are terminals.
 *
 * Sequences are stored back to back; sequence k occupies [offsets[k], offsets[k + 1]).
 * A sequence whose last state is a score is censored.
 */
class TrajectorySet {
 public:
  explicit TrajectorySet(int n = 1);

  int n() const { return n_; }
  std::size_t size() const { return offsets_.size() - 1; }
  bool empty() const { return size() == 0; }
  std::span<const int> operator[](std::size_t k) const;
  std::size_t transition_count() const;

  /// Appends a sequence; throws `ValidationError` on an out-of-range state or a state after a terminal.
  void add(std::span<const int> states);
  void append(const TrajectorySet& other);

 private:
  int n_;
  std::vector<int> states_;
  std::vector<std::size_t> offsets_;
};

/// Radii of the intervals [T - alpha_i, T + 2 alpha_i] and their nominal level.
struct ConfidenceSpec {
  Eigen::VectorXd alpha;
  double level = 0.95;
};

/// Published radii for the ten-score model, 1e-4 (4, 8, 10, 14, 15, 43, 46, 47, 46, 45).
ConfidenceSpec published_confidence();

struct KernelEstimate {
  TransitionKernel kernel;
  /// n x (n+3) transition counts.
  Eigen::MatrixXd counts;
};

/// n x (n+3) transition counts, merged in a fixed chunk order.
Eigen::MatrixXd count_transitions(const TrajectorySet& data, Exec exec = Exec::parallel);

/// Empirical next-state distributions; throws `ValidationError` naming every unobserved score.
KernelEstimate estimate_kernel(const TrajectorySet& data, Exec exec = Exec::parallel);

/// Goodman simultaneous interval for one cell of a multinomial row.
struct CellInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// chi-square quantile with one degree of freedom at 1 - (1 - level) / cells.
double goodman_quantile(int cells, double level = 0.95);

CellInterval goodman_interval(double count, double total, double quantile);

/**
 * Per-row radius alpha_i: the smallest alpha whose interval [p - alpha, p + 2 alpha] contains
 * the Goodman interval of every cell of row i, capped at 1. Throws on an empty row.
 */
ConfidenceSpec confidence_radii(const Eigen::MatrixXd& counts, double level = 0.95);

/**
 * Kernels drawn uniformly in the per-entry boxes [T - alpha_i, T + 2 alpha_i] clipped to [0, 1].
 *
 * Each row is projected back to the simplex and redrawn when the projection leaves its box.
 * Sample k uses `derive_seed(seed, k)`. Throws `ConvergenceError` when more than 99% of the
 * draws for a row are rejected.
 */
std::vector<TransitionKernel> sample_kernels_in_ci(const TransitionKernel& kernel, const ConfidenceSpec& spec, int count,
                                                   std::uint64_t seed, Exec exec = Exec::parallel);

/// True when every entry of `sample` lies within [T - alpha_i, T + 2 alpha_i] of `kernel`.
bool within_intervals(const TransitionKernel& sample, const TransitionKernel& kernel, const Eigen::VectorXd& alpha,
                      double tol = 1e-12);

/**
 * Independent absorbing chains started from `start_dist`.
 *
 * Trajectories are generated in fixed-size chunks with chunk c seeded by `derive_seed(seed, c)`,
 * so the result does not depend on `exec`. A chain still in the ward after `max_periods`
 * transitions is censored.
 */
TrajectorySet synth_trajectories(const TransitionKernel& kernel, const Eigen::VectorXd& start_dist, std::size_t count,
                                 std::uint64_t seed, Exec exec = Exec::parallel, int max_periods = 100000);

}  // namespace icu
