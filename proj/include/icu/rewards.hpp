#pragma once

#include <utility>

namespace icu {

/**
 * Base rewards of the single-patient model.
 *
 * Terminal rewards are one-shot; r_W is collected every period in the ward.
 * Construction through `validate()` enforces the reward ordering
 * r_RL >= r_PT_RL >= r_CR_RL >= r_D >= r_CR_D >= r_PT_D.
 */
struct RewardSpec {
  double r_W = 0.0;
  double r_RL = 0.0;
  double r_D = 0.0;
  double r_PT_RL = 0.0;
  double r_PT_D = 0.0;
  double r_CR_RL = 0.0;
  double r_CR_D = 0.0;
  double d_A = 0.0;
  double d_C = 0.0;
  double lambda = 0.95;

  /// Throws `ValidationError` when an ordering, a probability range or the discount range is violated.
  void validate() const;

  /// d_A * r_PT_D + (1 - d_A) * r_PT_RL.
  double r_PT() const { return d_A * r_PT_D + (1.0 - d_A) * r_PT_RL; }
  /// d_C * r_CR_D + (1 - d_C) * r_CR_RL.
  double r_CR() const { return d_C * r_CR_D + (1.0 - d_C) * r_CR_RL; }

  /// Experiment rewards: per-period figures divided by 1 - 0.95, with d_A = 0.0009 and d_C = 0.4761.
  static RewardSpec experiment_default();
};

/// Returns (r_PT, r_CR) for a validated spec.
std::pair<double, double> derive_composite_rewards(const RewardSpec& spec);

/**
 * Rewards as seen by the solvers: one value per terminal state.
 *
 * Separate from `RewardSpec` so that r_PT can be swept or penalized freely,
 * including negative values, without re-deriving it from death weights.
 */
struct MdpRewards {
  double r_W = 0.0;
  double r_CR = 0.0;
  double r_RL = 0.0;
  double r_D = 0.0;
  double r_PT = 0.0;
  double lambda = 0.95;

  MdpRewards() = default;
  MdpRewards(double r_w, double r_cr, double r_rl, double r_d, double r_pt, double lam);
  // NOLINTNEXTLINE(google-explicit-constructor)
  MdpRewards(const RewardSpec& spec);

  /// Terminal reward for exit offset 0, 1, 2 (CR, RL, D).
  double exit_reward(int e) const { return e == 0 ? r_CR : (e == 1 ? r_RL : r_D); }

  MdpRewards with_r_pt(double r_pt) const;
  MdpRewards scaled(double alpha) const;
  MdpRewards translated(double alpha) const;

  /// (r_W + lambda * r_PT) / (r_W + lambda * r_RL).
  double transfer_ratio() const;

  /// Throws `ValidationError` unless lambda is in (0, 1) and all values are finite.
  void validate() const;
};

}  // namespace icu
