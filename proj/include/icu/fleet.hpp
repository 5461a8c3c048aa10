#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "icu/generators.hpp"
#include "icu/parallel.hpp"

namespace icu {

/**
 * N identical patients sharing one single-patient model, with at most m proactive transfers
 * per period.
 *
 * Each patient is in a score or done; a patient collects its terminal reward on the transition
 * that ends its stay and contributes nothing afterwards.
 */
struct FleetInstance {
  int N = 1;
  int m = 1;
  Instance base;

  int n() const { return base.kernel.n(); }
  /// (n+4)^N, the size of the joint space with explicit terminal states.
  double joint_state_bound() const;
  /// Throws `ValidationError` unless 1 <= m <= N.
  void validate() const;
  /// Throws `ValidationError` unless n <= 4, N <= 3 and (n+4)^N <= 200000.
  void validate_joint_size() const;
};

/// Joint states are base-(n+1) numbers; digit l is patient l's score index, or n once done.
struct FleetSolution {
  int n = 0;
  int N = 0;
  Eigen::VectorXd value;
  /// Bit l set when patient l is transferred in that state.
  std::vector<unsigned> transfers;
  /// Expected value when every patient starts independently from p0.
  double value_at_p0 = 0.0;
  int iterations = 0;

  std::vector<int> decode(int state) const;
  int encode(const std::vector<int>& digits) const;
};

/**
 * Value iteration on the joint model with at most m transfers per state, stopped at a sup-norm
 * change below tol (1 + |v|) and polished by exact policy evaluation.
 */
FleetSolution solve_fleet_exact(const FleetInstance& instance, double tol = 1e-12);

/**
 * Joint model with the transfer cap dualized: any transfer set is allowed, each transfer costs mu
 * and every period pays m * mu, including after all patients are done.
 */
FleetSolution solve_fleet_penalized(const FleetInstance& instance, double mu, double tol = 1e-12);

/// Single-patient value with the transfer reward lowered to r_PT - mu / lambda.
ValueVector penalized_single_value(const Instance& base, double mu);

/// m mu / (1 - lambda) + N p0 . V^mu.
double lagrangian_value(const FleetInstance& instance, double mu);

struct LagrangianCurve {
  std::vector<double> mu;
  std::vector<double> g;
  double mu_star = 0.0;
  double g_star = 0.0;
  /// Most negative discrete second difference on the sampled curve, zero when convex.
  double convexity_violation = 0.0;
  bool convex(double tol = 1e-9) const;
};

/// Smallest mu beyond which the transfer branch is never chosen, so the curve is linear in mu.
double penalty_upper_bound(const Instance& base);

/**
 * g_m on an even grid of `points` over [0, penalty_upper_bound], then a golden-section search
 * between the neighbours of the grid argmin. Grid points are evaluated in parallel.
 */
LagrangianCurve lagrangian_curve(const FleetInstance& instance, int points = 101, Exec exec = Exec::parallel);

struct WhittleSweep {
  std::vector<double> r_pt;
  /// Optimal threshold per grid point; -1 when the optimal policy is not threshold.
  std::vector<int> thresholds;
  bool monotone() const;
};

/**
 * Optimal single-patient threshold for each transfer reward in `grid`.
 *
 * Throws `ValidationError` with the violated condition when the reward or kernel conditions fail
 * at r_PT = 0.
 */
WhittleSweep whittle_sweep(const Instance& base, const std::vector<double>& grid, Exec exec = Exec::parallel);

/// Even grid of `points` transfer rewards over [0, r_RL].
std::vector<double> transfer_reward_grid(const Instance& base, int points);

struct CapacityPoint {
  int m = 0;
  double mu_star = 0.0;
  double bound = 0.0;
  int threshold = 0;
};

/**
 * Optimal multiplier and induced single-patient threshold for each cap in `ms`.
 *
 * Throws `ConvergenceError` when a sampled curve breaches convexity.
 */
std::vector<CapacityPoint> m_sensitivity(const Instance& base, int N, const std::vector<int>& ms, int points = 101,
                                         Exec exec = Exec::parallel);

std::string whittle_csv(const WhittleSweep& sweep);
std::string lagrangian_csv(const LagrangianCurve& curve);
std::string capacity_csv(const std::vector<CapacityPoint>& points);

}  // namespace icu
