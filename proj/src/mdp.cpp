#include "icu/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icu/errors.hpp"

namespace icu {

namespace {

void check_sizes(const TransitionKernel& kernel, const ValueVector& v) {
  if (v.size() != kernel.n() + 4) {
    throw ValidationError("value vector length " + std::to_string(v.size()) + " does not match n+4 = " +
                          std::to_string(kernel.n() + 4));
  }
}

double scale_of(double a, double b) { return std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

void pin_terminals(ValueVector& v, const MdpRewards& rewards) {
  const auto n = v.size() - 4;
  v[n + kCR] = rewards.r_CR;
  v[n + kRL] = rewards.r_RL;
  v[n + kD] = rewards.r_D;
  v[n + 3] = rewards.r_PT;
}

ValueVector pinned_zero_value(int n, const MdpRewards& rewards) {
  ValueVector v = ValueVector::Zero(n + 4);
  pin_terminals(v, rewards);
  return v;
}

ValueVector initial_value(int n, const MdpRewards& rewards) {
  ValueVector v = ValueVector::Zero(n + 4);
  v[pt_index(n)] = rewards.r_PT;
  return v;
}

double outside_option(const TransitionKernel& kernel, const MdpRewards& rewards, int i) {
  if (i < 0 || i >= kernel.n()) {
    throw ValidationError("outside_option: score index " + std::to_string(i) + " out of range");
  }
  return rewards.r_CR * kernel.exit(i, kCR) + rewards.r_RL * kernel.exit(i, kRL) + rewards.r_D * kernel.exit(i, kD);
}

Eigen::VectorXd continuation(const TransitionKernel& kernel, const ValueVector& v) {
  check_sizes(kernel, v);
  return kernel.matrix() * v.head(kernel.n() + 3);
}

BellmanResult bellman_apply(const ValueVector& v, const TransitionKernel& kernel, const MdpRewards& rewards) {
  const int n = kernel.n();
  const Eigen::VectorXd cont = continuation(kernel, v);
  const double transfer = rewards.r_W + rewards.lambda * rewards.r_PT;
  BellmanResult out{ValueVector(n + 4), TransferPolicy(Eigen::VectorXd::Zero(n))};
  for (int i = 0; i < n; ++i) {
    const double stay = rewards.r_W + rewards.lambda * cont[i];
    if (transfer > stay) {
      out.value[i] = transfer;
      out.policy.probs[i] = 1.0;
    } else {
      out.value[i] = stay;
    }
  }
  pin_terminals(out.value, rewards);
  return out;
}

ViResult value_iteration(const TransitionKernel& kernel, const MdpRewards& rewards, const ViOptions& options) {
  if (!(options.tol > 0.0)) throw ValidationError("value_iteration: tol must be positive");
  rewards.validate();
  const int n = kernel.n();
  ValueVector v = options.start ? *options.start : initial_value(n, rewards);
  check_sizes(kernel, v);
  ViResult result;
  for (int it = 1; it <= options.max_iter; ++it) {
    BellmanResult next = bellman_apply(v, kernel, rewards);
    if (options.observer) options.observer(it, next.policy);
    const double diff = (next.value - v).lpNorm<Eigen::Infinity>();
    v = std::move(next.value);
    result.policy = std::move(next.policy);
    result.iterations = it;
    if (diff < options.tol) {
      result.value = v;
      if (options.polish) {
        for (int k = 0; k < n + 2; ++k) {
          ValueVector exact = evaluate_policy(result.policy, kernel, rewards);
          BellmanResult check = bellman_apply(exact, kernel, rewards);
          result.value = std::move(exact);
          if (check.policy == result.policy) break;
          result.policy = std::move(check.policy);
        }
      }
      return result;
    }
  }
  throw ConvergenceError("value_iteration: no convergence within " + std::to_string(options.max_iter) +
                         " iterations");
}

ValueVector evaluate_policy(const TransferPolicy& policy, const TransitionKernel& kernel, const MdpRewards& rewards) {
  const int n = kernel.n();
  if (policy.n() != n) throw ValidationError("policy length does not match kernel");
  const Eigen::MatrixXd q = kernel.ward_block();
  const Eigen::Vector3d exits(rewards.r_CR, rewards.r_RL, rewards.r_D);
  const Eigen::VectorXd out = kernel.exit_block() * exits;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const double p = policy.probs[i];
    a.row(i) -= rewards.lambda * (1.0 - p) * q.row(i);
    b[i] = rewards.r_W + rewards.lambda * (p * rewards.r_PT + (1.0 - p) * out[i]);
  }
  ValueVector v(n + 4);
  v.head(n) = a.partialPivLu().solve(b);
  pin_terminals(v, rewards);
  return v;
}

Evaluation policy_evaluation(const TransferPolicy& policy, const TransitionKernel& kernel, const MdpRewards& rewards,
                             const Eigen::VectorXd& p0) {
  validate_distribution(p0, 1e-12, "initial distribution");
  if (p0.size() != kernel.n()) throw ValidationError("initial distribution length does not match kernel");
  Evaluation e;
  e.value = evaluate_policy(policy, kernel, rewards);
  e.reward = p0.dot(e.value.head(kernel.n()));
  return e;
}

bool check_assumption_0(const MdpRewards& rewards) {
  return rewards.r_W / (1.0 - rewards.lambda) <= rewards.r_W + rewards.lambda * rewards.r_RL;
}

KernelAssumptionReport check_assumption_1(const TransitionKernel& kernel, const MdpRewards& rewards, double tol) {
  const int n = kernel.n();
  const Eigen::VectorXd s = kernel.ward_mass();
  const double rho = rewards.transfer_ratio();
  const double stay_pt = rewards.r_W + rewards.lambda * rewards.r_PT;
  const double stay_rl = rewards.r_W + rewards.lambda * rewards.r_RL;
  KernelAssumptionReport rep;
  for (int i = 0; i + 1 < n; ++i) {
    const double o1 = outside_option(kernel, rewards, i);
    const double o2 = outside_option(kernel, rewards, i + 1);
    if (o1 - o2 < -tol * scale_of(o1, o2)) {
      rep.cond2 = false;
      if (rep.cond2_witness < 0) rep.cond2_witness = i;
    }
    if (s[i] <= 0.0) {
      rep.degenerate = true;
      rep.cond3 = false;
      if (rep.cond3_witness < 0) rep.cond3_witness = i;
    } else if (rho * s[i] - s[i + 1] < -tol) {
      rep.cond3 = false;
      if (rep.cond3_witness < 0) rep.cond3_witness = i;
    }
    const double lhs = s[i] * stay_pt + o1;
    const double rhs = s[i + 1] * stay_rl + o2;
    if (lhs - rhs < -tol * scale_of(lhs, rhs)) {
      rep.cond4 = false;
      if (rep.cond4_witness < 0) rep.cond4_witness = i;
    }
  }
  return rep;
}

double lemma1_bound(const MdpRewards& rewards) { return rewards.r_W + rewards.lambda * rewards.r_RL; }

bool lemma1_bound_check(const ValueVector& v, const MdpRewards& rewards) {
  const double bound = lemma1_bound(rewards) + 1e-9;
  const auto n = v.size() - 4;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v[i] > bound) return false;
  }
  return true;
}

}  // namespace icu
