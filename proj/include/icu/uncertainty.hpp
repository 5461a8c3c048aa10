#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "icu/kernel.hpp"
#include "icu/mdp.hpp"
#include "icu/parallel.hpp"
#include "icu/policy.hpp"
#include "icu/rewards.hpp"

namespace icu {

/// {w : lower <= w <= upper, sum w = 1}.
struct BoxSimplexSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  BoxSimplexSet() = default;
  BoxSimplexSet(Eigen::VectorXd lo, Eigen::VectorXd hi);

  int size() const { return static_cast<int>(lower.size()); }

  /// Throws `ValidationError` on shape or ordering problems and `InfeasibleError` when the set is empty.
  void validate() const;
  bool contains(const Eigen::VectorXd& w, double tol = 1e-9) const;

  static BoxSimplexSet singleton(const Eigen::VectorXd& w);
  /// [w - below, w + above] clipped to [0, 1].
  static BoxSimplexSet around(const Eigen::VectorXd& w, const Eigen::VectorXd& below, const Eigen::VectorXd& above);
  static BoxSimplexSet around(const Eigen::VectorXd& w, double below, double above);
};

struct InnerMin {
  Eigen::VectorXd w;
  double value = 0.0;
};

/**
 * Minimizes cost . w over a box-simplex set.
 *
 * Starts at the lower bounds and pours the remaining mass into coordinates in ascending cost
 * order up to their upper bounds. Equal costs are filled lowest index first.
 */
InnerMin inner_min_box_simplex(const Eigen::VectorXd& cost, const BoxSimplexSet& set);

/// Maximizer counterpart, computed as the minimizer of the negated cost.
InnerMin inner_max_box_simplex(const Eigen::VectorXd& cost, const BoxSimplexSet& set);

/**
 * Checks optimality of `sol` through an explicit dual solution.
 *
 * The multiplier nu of the sum constraint is the cost of the split coordinate; the dual value
 * nu + sum_j min(0, c_j - nu) u_j + sum_j max(0, c_j - nu) l_j must equal the primal value.
 */
bool certify_inner_min(const Eigen::VectorXd& cost, const BoxSimplexSet& set, const InnerMin& sol, double tol = 1e-10);

/// Factor-matrix uncertainty: T = U W^T with column l of W ranging over factor_sets[l].
class FactorModel {
 public:
  FactorModel() = default;
  FactorModel(Eigen::MatrixXd u, Eigen::MatrixXd w_nominal, std::vector<BoxSimplexSet> factor_sets);

  int n() const { return static_cast<int>(u_.rows()); }
  int rank() const { return static_cast<int>(u_.cols()); }
  const Eigen::MatrixXd& u() const { return u_; }
  const Eigen::MatrixXd& w_nominal() const { return w_; }
  const std::vector<BoxSimplexSet>& factor_sets() const { return sets_; }

  TransitionKernel nominal_kernel() const;
  TransitionKernel kernel_for(const std::vector<Eigen::VectorXd>& factors) const;
  bool contains_factors(const std::vector<Eigen::VectorXd>& factors, double tol = 1e-9) const;

  /// Same U and W with every factor set collapsed to its nominal column.
  FactorModel singleton() const;

 private:
  Eigen::MatrixXd u_;
  Eigen::MatrixXd w_;
  std::vector<BoxSimplexSet> sets_;
};

/// Row-wise independent boxes around a nominal kernel.
class RectangularSet {
 public:
  RectangularSet() = default;
  RectangularSet(TransitionKernel nominal, std::vector<BoxSimplexSet> rows);

  /// Rows [T0 - alpha_i, T0 + 2 alpha_i] clipped to [0, 1].
  static RectangularSet from_alpha(const TransitionKernel& nominal, const Eigen::VectorXd& alpha);

  int n() const { return nominal_.n(); }
  const TransitionKernel& nominal() const { return nominal_; }
  const std::vector<BoxSimplexSet>& rows() const { return rows_; }
  bool contains(const TransitionKernel& kernel, double tol = 1e-9) const;

 private:
  TransitionKernel nominal_;
  std::vector<BoxSimplexSet> rows_;
};

using UncertaintySet = std::variant<FactorModel, RectangularSet>;

int set_size_n(const UncertaintySet& set);
TransitionKernel nominal_kernel(const UncertaintySet& set);

/**
 * Minimizing response of the adversary to a value vector.
 *
 * `choices` holds one factor per column of W for a factor model, or one row per score for a
 * rectangular set; `continuation[i]` is the minimized T_i . v.
 */
struct AdversaryChoice {
  Eigen::VectorXd continuation;
  std::vector<Eigen::VectorXd> choices;
};

AdversaryChoice adversary_response(const ValueVector& v, const UncertaintySet& set, Exec exec = Exec::serial);

/// Kernel assembled from an adversary choice.
TransitionKernel kernel_from_choice(const UncertaintySet& set, const std::vector<Eigen::VectorXd>& choices);

/// Robust Bellman step: new[i] = max{r_W + lambda min_T T_i . v, r_W + lambda r_PT}, terminals pinned.
BellmanResult robust_bellman_apply(const ValueVector& v, const UncertaintySet& set, const MdpRewards& rewards,
                                   Exec exec = Exec::serial);

struct RobustOptions {
  double tol = 1e-10;
  int max_iter = 100000;
  /// Skip the structural precondition check.
  bool waive_assumption = false;
  Exec exec = Exec::serial;
};

struct RobustSolution {
  TransferPolicy policy;
  ValueVector value;
  TransitionKernel worst_kernel;
  std::vector<Eigen::VectorXd> worst_factors;
  int iterations = 0;
};

/**
 * Robust value iteration followed by an exact evaluation of the resulting pair.
 *
 * The returned value is the exact value of (policy, worst_kernel) and the policy is greedy
 * with respect to it under the robust operator.
 */
RobustSolution robust_value_iteration(const UncertaintySet& set, const MdpRewards& rewards,
                                      const RobustOptions& options = {});

struct WorstCase {
  TransitionKernel kernel;
  std::vector<Eigen::VectorXd> factors;
  ValueVector value;
  double reward = 0.0;
};

/// Adversary-only fixed point for a fixed policy, polished to the exact value of its kernel.
WorstCase worst_case_kernel(const TransferPolicy& policy, const UncertaintySet& set, const MdpRewards& rewards,
                            const Eigen::VectorXd& p0, double tol = 1e-10, int max_iter = 100000);

struct Assumption3Report {
  bool holds = true;
  /// Minimum over the set of rho S_i - S_{i+1}, and of out(i) - out(i+1), over all i.
  double min_ratio_margin = 0.0;
  double min_outside_margin = 0.0;
  int ratio_witness_row = -1;
  int outside_witness_row = -1;
  /// Kernel attaining the most negative margin, when a condition fails.
  std::optional<TransitionKernel> witness_kernel;
  std::string describe() const;
};

/// Exact check of the structural conditions for every kernel of the set.
Assumption3Report check_assumption_3(const UncertaintySet& set, const MdpRewards& rewards, double tol = 1e-12);

/// Random kernel of the set: a Dirichlet mixture of greedy vertices drawn from random cost vectors.
TransitionKernel sample_kernel(const UncertaintySet& set, std::mt19937_64& rng);

enum class MaxPrincipleKind { nominal_dominance, worst_case_minimality, robust_dominance };

struct MaxPrincipleViolation {
  MaxPrincipleKind kind = MaxPrincipleKind::nominal_dominance;
  std::string witness;
  double amount = 0.0;
};

struct MaxPrincipleReport {
  long checks = 0;
  /// Largest observed v_lhs - v_rhs over all checks; nonpositive up to tolerance when the principle holds.
  double worst_gap = 0.0;
  std::vector<MaxPrincipleViolation> violations;
  bool ok() const { return violations.empty(); }
};

/**
 * Componentwise robust maximum principle over candidate policies and sampled kernels.
 *
 * Nominal dominance: for each sample T, the nominal optimum of T dominates every candidate on T.
 * Worst-case minimality: each candidate's worst-case value lies below its value on every sample.
 * Robust dominance: the robust pair dominates the worst-case value of every candidate.
 */
MaxPrincipleReport verify_max_principle(const RobustSolution& robust, const UncertaintySet& set,
                                        const MdpRewards& rewards, const std::vector<TransferPolicy>& candidates,
                                        const std::vector<TransitionKernel>& samples, double tol = 1e-8);

}  // namespace icu
