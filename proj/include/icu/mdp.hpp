#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "icu/kernel.hpp"
#include "icu/policy.hpp"
#include "icu/rewards.hpp"

namespace icu {

/**
 * Value vector of length n+4.
 *
 * Entries 0..n-1 hold the scores; entries n, n+1, n+2, n+3 hold CR, RL, D and PT.
 */
using ValueVector = Eigen::VectorXd;

/// Index of the PT entry in a value vector for n scores.
inline int pt_index(int n) { return n + 3; }

/// Copies the terminal rewards into entries n..n+3.
void pin_terminals(ValueVector& v, const MdpRewards& rewards);

/// Zeros on the scores with terminals pinned.
ValueVector pinned_zero_value(int n, const MdpRewards& rewards);

/// Value-iteration start: zeros everywhere except PT = r_PT; the first Bellman step transfers everyone when r_PT > 0.
ValueVector initial_value(int n, const MdpRewards& rewards);

/// r_CR * T[i,CR] + r_RL * T[i,RL] + r_D * T[i,D] for score index i in [0, n).
double outside_option(const TransitionKernel& kernel, const MdpRewards& rewards, int i);

struct BellmanResult {
  ValueVector value;
  TransferPolicy policy;
};

/**
 * One application of the Bellman operator.
 *
 * new[i] = max{r_W + lambda * sum_j T[i,j] v[j], r_W + lambda * r_PT} over the n+3 kernel columns,
 * terminal entries of the result are pinned. The greedy policy transfers only when the transfer branch
 * is strictly larger.
 */
BellmanResult bellman_apply(const ValueVector& v, const TransitionKernel& kernel, const MdpRewards& rewards);

struct ViOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  /// Replace the final iterate by the exact value of the greedy policy and re-check greediness.
  bool polish = true;
  /// Optional starting point; defaults to `initial_value`.
  std::optional<ValueVector> start;
  /// Called after every sweep with (iteration, greedy policy of that sweep).
  std::function<void(int, const TransferPolicy&)> observer;
};

struct ViResult {
  ValueVector value;
  TransferPolicy policy;
  int iterations = 0;
};

/// Value iteration to sup-norm successive difference below `tol`; throws `ConvergenceError` past max_iter.
ViResult value_iteration(const TransitionKernel& kernel, const MdpRewards& rewards, const ViOptions& options = {});

/// Exact value of a (possibly randomized) policy via a linear solve.
ValueVector evaluate_policy(const TransferPolicy& policy, const TransitionKernel& kernel, const MdpRewards& rewards);

struct Evaluation {
  ValueVector value;
  double reward = 0.0;
};

/// Exact value plus R = p0 . v over the scores.
Evaluation policy_evaluation(const TransferPolicy& policy, const TransitionKernel& kernel, const MdpRewards& rewards,
                             const Eigen::VectorXd& p0);

/// r_W / (1 - lambda) <= r_W + lambda * r_RL.
bool check_assumption_0(const MdpRewards& rewards);

struct KernelAssumptionReport {
  bool cond2 = true;
  bool cond3 = true;
  bool cond4 = true;
  bool degenerate = false;
  /// First violating score index i (comparison of i and i+1), -1 when the condition holds.
  int cond2_witness = -1;
  int cond3_witness = -1;
  int cond4_witness = -1;
  bool all() const { return cond2 && cond3; }
};

/**
 * Structural conditions on the kernel.
 *
 * cond2: out(i) >= out(i+1). cond3: ratio >= S_{i+1} / S_i with S the ward mass.
 * cond4: S_i (r_W + lambda r_PT) + out(i) >= S_{i+1} (r_W + lambda r_RL) + out(i+1).
 * A row with zero ward mass marks the report degenerate and cond3 false.
 */
KernelAssumptionReport check_assumption_1(const TransitionKernel& kernel, const MdpRewards& rewards,
                                          double tol = 1e-12);

/// r_W + lambda * r_RL.
double lemma1_bound(const MdpRewards& rewards);

/// v[i] <= r_W + lambda * r_RL + 1e-9 over the scores.
bool lemma1_bound_check(const ValueVector& v, const MdpRewards& rewards);

/// Kernel columns times v, with the terminal entries of v used for the exit columns.
Eigen::VectorXd continuation(const TransitionKernel& kernel, const ValueVector& v);

}  // namespace icu
