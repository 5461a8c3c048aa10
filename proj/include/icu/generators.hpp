#pragma once

#include <Eigen/Dense>
#include <random>

#include "icu/kernel.hpp"
#include "icu/rewards.hpp"
#include "icu/uncertainty.hpp"

namespace icu {

/// A single-patient model: kernel, rewards and an initial distribution.
struct Instance {
  TransitionKernel kernel;
  RewardSpec spec;
  MdpRewards rewards;
  Eigen::VectorXd p0;
};

struct GeneratorOptions {
  int n_min = 2;
  int n_max = 10;
  int max_attempts = 10000;
  /// Build the kernel against the transfer ratio at r_PT = 0, so the conditions hold for every r_PT >= 0.
  bool conditions_at_zero_transfer_reward = false;
};

/// Ordered base rewards scaled by a random positive factor, with r_W small enough that staying forever is never best.
RewardSpec random_reward_spec(std::mt19937_64& rng);

/**
 * Random model satisfying the reward and kernel structural conditions.
 *
 * Ward mass decreases geometrically at a rate no slower than the transfer ratio, and the exit
 * composition shifts from RL towards CR and D so that the outside option decreases.
 * Candidates failing `check_assumption_0` or `check_assumption_1` are redrawn.
 */
Instance generate_instance(std::mt19937_64& rng, const GeneratorOptions& options = {});

/// A factor-model uncertainty set whose every kernel satisfies the structural conditions.
struct RobustInstance {
  Instance base;
  FactorModel model;
};

/**
 * Random factor model with interpolating mixing weights and box factor sets.
 *
 * Factor ward masses decrease geometrically and factor outside options decrease; every row of U
 * mixes two adjacent factors. Boxes are [w (1 - eps), w (1 + 2 eps)] coordinatewise and eps is
 * halved until `check_assumption_3` accepts the set. The transfer reward is then moved between the
 * worst-case and nominal continuation of one score when the set stays admissible, so
 * `base.rewards.r_PT` may differ from `base.spec.r_PT()`.
 */
RobustInstance generate_robust_instance(std::mt19937_64& rng, const GeneratorOptions& options = {});

/**
 * Two-score model whose optimal policy is not threshold.
 *
 * lambda = 0.01, r_W = 1.6, r_RL = 3, r_CR = 2, r_D = 1.5, r_PT = 2; row 1 moves to score 2 with
 * probability 0.4 and exits (RL, CR, D) = (0.3, 0, 0.3); row 2 exits (0.3, 0.4, 0.3).
 */
Instance counterexample_instance();

/// Kernel sending every score to exit `e` in one step.
TransitionKernel absorbing_kernel(int n, Exit e);

/// Point mass on score index i.
Eigen::VectorXd point_mass(int n, int i);

/// Dirichlet(1, ..., 1) draw of length m.
Eigen::VectorXd dirichlet_ones(int m, std::mt19937_64& rng);

}  // namespace icu
