#include "icu/fleet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "icu/errors.hpp"
#include "icu/mdp.hpp"

namespace icu {

namespace {

constexpr double kMaxJointStates = 200000.0;
constexpr int kMaxJointScores = 4;
constexpr int kMaxJointPatients = 3;
constexpr int kMaxPolicySweeps = 200;
constexpr int kMaxValueSweeps = 1000000;

struct Outcome {
  int state;
  double prob;
};

/// One feasible action in one joint state: immediate reward and next-state distribution.
struct Action {
  unsigned transfers;
  double reward;
  std::vector<Outcome> next;
};

int ipow(int b, int e) {
  int r = 1;
  for (int k = 0; k < e; ++k) r *= b;
  return r;
}

/// Enumerates actions for every joint state; `cap` bounds the transfer count, `mu` charges each transfer.
std::vector<std::vector<Action>> build_actions(const FleetInstance& inst, int cap, double mu, bool penalized) {
  const int n = inst.n();
  const int N = inst.N;
  const int base = n + 1;
  const int states = ipow(base, N);
  const TransitionKernel& k = inst.base.kernel;
  const MdpRewards& r = inst.base.rewards;

  Eigen::MatrixXd step(n, base);
  Eigen::VectorXd exit_reward(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) step(i, j) = k(i, j);
    step(i, n) = k.exit(i, kCR) + k.exit(i, kRL) + k.exit(i, kD);
    exit_reward[i] = k.exit(i, kCR) * r.r_CR + k.exit(i, kRL) * r.r_RL + k.exit(i, kD) * r.r_D;
  }

  std::vector<std::vector<Action>> actions(states);
  std::vector<int> digits(N);
  for (int s = 0; s < states; ++s) {
    int rest = s;
    unsigned active = 0;
    for (int l = 0; l < N; ++l) {
      digits[l] = rest % base;
      rest /= base;
      if (digits[l] < n) active |= 1u << l;
    }
    std::vector<unsigned> subsets;
    for (unsigned a = 0; a < (1u << N); ++a) {
      if ((a & ~active) == 0 && std::popcount(a) <= cap) subsets.push_back(a);
    }
    std::stable_sort(subsets.begin(), subsets.end(),
                     [](unsigned x, unsigned y) { return std::popcount(x) < std::popcount(y); });
    for (unsigned a : subsets) {
      Action act{a, 0.0, {}};
      double terminal = 0.0;
      for (int l = 0; l < N; ++l) {
        if (!(active >> l & 1u)) continue;
        act.reward += r.r_W;
        terminal += (a >> l & 1u) ? r.r_PT : exit_reward[digits[l]];
      }
      act.reward += r.lambda * terminal;
      if (penalized) act.reward += mu * (inst.m - std::popcount(a));
      std::vector<Outcome> dist{{0, 1.0}};
      int place = 1;
      for (int l = 0; l < N; ++l, place *= base) {
        std::vector<Outcome> grown;
        const bool moves = (active >> l & 1u) && !(a >> l & 1u);
        if (!moves) {
          const int d = (active >> l & 1u) ? n : digits[l];
          for (auto& o : dist) grown.push_back({o.state + d * place, o.prob});
        } else {
          for (auto& o : dist) {
            for (int j = 0; j < base; ++j) {
              const double p = step(digits[l], j);
              if (p > 0.0) grown.push_back({o.state + j * place, o.prob * p});
            }
          }
        }
        dist = std::move(grown);
      }
      act.next = std::move(dist);
      actions[s].push_back(std::move(act));
    }
  }
  return actions;
}

double action_value(const Action& a, const Eigen::VectorXd& v, double lambda) {
  double e = 0.0;
  for (const auto& o : a.next) e += o.prob * v[o.state];
  return a.reward + lambda * e;
}

/// Index of the best action; a larger transfer set must win by more than rounding.
int greedy(const std::vector<Action>& acts, const Eigen::VectorXd& v, double lambda, double* best_value) {
  int best = 0;
  double bv = action_value(acts[0], v, lambda);
  for (std::size_t k = 1; k < acts.size(); ++k) {
    const double val = action_value(acts[k], v, lambda);
    if (val > bv + 1e-12 * (1.0 + std::abs(bv))) {
      bv = val;
      best = static_cast<int>(k);
    }
  }
  if (best_value) *best_value = bv;
  return best;
}

FleetSolution solve_joint(const FleetInstance& inst, int cap, double mu, bool penalized, double tol) {
  inst.validate();
  inst.validate_joint_size();
  inst.base.rewards.validate();
  if (!(tol > 0.0)) throw ValidationError("fleet: tol must be positive");
  const int n = inst.n();
  const double lambda = inst.base.rewards.lambda;
  const auto actions = build_actions(inst, cap, mu, penalized);
  const int states = static_cast<int>(actions.size());

  FleetSolution sol;
  sol.n = n;
  sol.N = inst.N;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(states);
  for (int it = 1;; ++it) {
    Eigen::VectorXd next(states);
    for (int s = 0; s < states; ++s) greedy(actions[s], v, lambda, &next[s]);
    const double diff = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    sol.iterations = it;
    if (diff < tol * (1.0 + v.cwiseAbs().maxCoeff())) break;
    if (it >= kMaxValueSweeps) throw ConvergenceError("fleet: value iteration did not converge");
  }

  std::vector<int> choice(states);
  for (int s = 0; s < states; ++s) choice[s] = greedy(actions[s], v, lambda, nullptr);
  for (int sweep = 0;; ++sweep) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(states, states);
    Eigen::VectorXd c(states);
    for (int s = 0; s < states; ++s) {
      const Action& act = actions[s][choice[s]];
      c[s] = act.reward;
      for (const auto& o : act.next) a(s, o.state) -= lambda * o.prob;
    }
    v = a.partialPivLu().solve(c);
    bool stable = true;
    for (int s = 0; s < states; ++s) {
      const int g = greedy(actions[s], v, lambda, nullptr);
      const double gain = action_value(actions[s][g], v, lambda) - action_value(actions[s][choice[s]], v, lambda);
      if (g != choice[s] && gain > 1e-12 * (1.0 + std::abs(v[s]))) {
        choice[s] = g;
        stable = false;
      }
    }
    if (stable) break;
    if (sweep >= kMaxPolicySweeps) throw ConvergenceError("fleet: policy polish did not settle");
  }

  sol.value = v;
  sol.transfers.resize(states);
  for (int s = 0; s < states; ++s) sol.transfers[s] = actions[s][choice[s]].transfers;

  const Eigen::VectorXd& p0 = inst.base.p0;
  const int active_states = ipow(n, inst.N);
  for (int k = 0; k < active_states; ++k) {
    std::vector<int> d(inst.N);
    int rest = k;
    double p = 1.0;
    for (int l = 0; l < inst.N; ++l) {
      d[l] = rest % n;
      rest /= n;
      p *= p0[d[l]];
    }
    sol.value_at_p0 += p * v[sol.encode(d)];
  }
  return sol;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo;
  double b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

int optimal_threshold(const Instance& base, double r_pt) {
  const ViResult res = value_iteration(base.kernel, base.rewards.with_r_pt(r_pt));
  return is_threshold(res.policy).value_or(-1);
}

std::string csv_number(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

}  // namespace

double FleetInstance::joint_state_bound() const { return std::pow(static_cast<double>(n() + 4), N); }

void FleetInstance::validate() const {
  if (N < 1) throw ValidationError("fleet: N must be at least 1");
  if (m < 1 || m > N) throw ValidationError("fleet: m must satisfy 1 <= m <= N");
  if (base.p0.size() != n()) throw ValidationError("fleet: initial distribution length must be n");
}

void FleetInstance::validate_joint_size() const {
  if (n() > kMaxJointScores || N > kMaxJointPatients || joint_state_bound() > kMaxJointStates) {
    throw ValidationError("fleet: joint model with n = " + std::to_string(n()) + ", N = " + std::to_string(N) +
                          " exceeds the exact-solve cap (n <= 4, N <= 3, (n+4)^N <= 200000)");
  }
}

std::vector<int> FleetSolution::decode(int state) const {
  std::vector<int> d(N);
  for (int l = 0; l < N; ++l) {
    d[l] = state % (n + 1);
    state /= n + 1;
  }
  return d;
}

int FleetSolution::encode(const std::vector<int>& digits) const {
  int s = 0;
  for (int l = N - 1; l >= 0; --l) s = s * (n + 1) + digits[l];
  return s;
}

FleetSolution solve_fleet_exact(const FleetInstance& instance, double tol) {
  return solve_joint(instance, instance.m, 0.0, false, tol);
}

FleetSolution solve_fleet_penalized(const FleetInstance& instance, double mu, double tol) {
  if (!(mu >= 0.0)) throw ValidationError("fleet: mu must be nonnegative");
  return solve_joint(instance, instance.N, mu, true, tol);
}

ValueVector penalized_single_value(const Instance& base, double mu) {
  if (!(mu >= 0.0)) throw ValidationError("fleet: mu must be nonnegative");
  const MdpRewards& r = base.rewards;
  return value_iteration(base.kernel, r.with_r_pt(r.r_PT - mu / r.lambda)).value;
}

double lagrangian_value(const FleetInstance& instance, double mu) {
  instance.validate();
  const int n = instance.n();
  const double lambda = instance.base.rewards.lambda;
  const ValueVector v = penalized_single_value(instance.base, mu);
  return instance.m * mu / (1.0 - lambda) + instance.N * instance.base.p0.dot(v.head(n));
}

bool LagrangianCurve::convex(double tol) const { return convexity_violation >= -tol; }

double penalty_upper_bound(const Instance& base) {
  const int n = base.kernel.n();
  const TransferPolicy never(Eigen::VectorXd::Zero(n));
  const Eigen::VectorXd cont = continuation(base.kernel, evaluate_policy(never, base.kernel, base.rewards));
  return std::max(0.0, base.rewards.lambda * (base.rewards.r_PT - cont.minCoeff()));
}

LagrangianCurve lagrangian_curve(const FleetInstance& instance, int points, Exec exec) {
  instance.validate();
  if (points < 3) throw ValidationError("lagrangian_curve: need at least 3 grid points");
  const double bound = penalty_upper_bound(instance.base);
  const double hi = bound > 0.0 ? 1.05 * bound : 1.0;
  LagrangianCurve c;
  c.mu.resize(points);
  c.g.resize(points);
  for (int k = 0; k < points; ++k) c.mu[k] = hi * k / (points - 1);
  for_each_index(exec, points, [&](int k) { c.g[k] = lagrangian_value(instance, c.mu[k]); });

  double scale = 1.0;
  for (double g : c.g) scale = std::max(scale, std::abs(g));
  for (int k = 1; k + 1 < points; ++k) {
    c.convexity_violation = std::min(c.convexity_violation, (c.g[k - 1] - 2.0 * c.g[k] + c.g[k + 1]) / scale);
  }

  const int best = static_cast<int>(std::min_element(c.g.begin(), c.g.end()) - c.g.begin());
  c.mu_star = c.mu[best];
  c.g_star = c.g[best];
  const double lo = c.mu[std::max(0, best - 1)];
  const double up = c.mu[std::min(points - 1, best + 1)];
  const auto g = [&](double mu) { return lagrangian_value(instance, mu); };
  const double refined = golden_section(g, lo, up, 1e-12 * (1.0 + hi));
  const double g_refined = g(refined);
  if (g_refined < c.g_star - 1e-12 * scale) {
    c.mu_star = refined;
    c.g_star = g_refined;
  }
  return c;
}

bool WhittleSweep::monotone() const {
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (thresholds[k] < 0) return false;
    if (k > 0 && thresholds[k] > thresholds[k - 1]) return false;
  }
  return true;
}

std::vector<double> transfer_reward_grid(const Instance& base, int points) {
  if (points < 2) throw ValidationError("transfer_reward_grid: need at least 2 points");
  std::vector<double> grid(points);
  for (int k = 0; k < points; ++k) grid[k] = base.rewards.r_RL * k / (points - 1);
  grid.back() = base.rewards.r_RL;
  return grid;
}

WhittleSweep whittle_sweep(const Instance& base, const std::vector<double>& grid, Exec exec) {
  const MdpRewards at_zero = base.rewards.with_r_pt(0.0);
  if (!check_assumption_0(at_zero)) {
    throw ValidationError("whittle_sweep: reward condition r_W / (1 - lambda) <= r_W + lambda r_RL fails");
  }
  const KernelAssumptionReport rep = check_assumption_1(base.kernel, at_zero);
  if (!rep.all()) {
    const int w = rep.cond2 ? rep.cond3_witness : rep.cond2_witness;
    throw ValidationError(std::string("whittle_sweep: kernel condition ") + (rep.cond2 ? "cond3" : "cond2") +
                          " fails at r_PT = 0 between " + state_label(base.kernel.n(), std::max(w, 0)) + " and " +
                          state_label(base.kernel.n(), std::max(w, 0) + 1));
  }
  WhittleSweep out;
  out.r_pt = grid;
  out.thresholds.resize(grid.size());
  for_each_index(exec, static_cast<int>(grid.size()), [&](int k) { out.thresholds[k] = optimal_threshold(base, grid[k]); });
  return out;
}

std::vector<CapacityPoint> m_sensitivity(const Instance& base, int N, const std::vector<int>& ms, int points,
                                         Exec exec) {
  std::vector<CapacityPoint> out;
  for (int m : ms) {
    const FleetInstance inst{N, m, base};
    const LagrangianCurve curve = lagrangian_curve(inst, points, exec);
    if (!curve.convex()) {
      throw ConvergenceError("m_sensitivity: sampled Lagrangian curve for m = " + std::to_string(m) +
                             " is not convex (second difference " + csv_number(curve.convexity_violation) + ")");
    }
    // At a kink of the dual curve both neighbouring policies are optimal; the threshold is read just
    // to the right of mu*, where the policy with fewer transfers is selected.
    const double nudge = 1e-9 * (1.0 + curve.mu.back());
    const double r_pt = base.rewards.r_PT - (curve.mu_star + nudge) / base.rewards.lambda;
    out.push_back({m, curve.mu_star, curve.g_star, optimal_threshold(base, r_pt)});
  }
  return out;
}

std::string whittle_csv(const WhittleSweep& sweep) {
  std::string s = "r_pt,threshold\n";
  for (std::size_t k = 0; k < sweep.r_pt.size(); ++k) {
    s += csv_number(sweep.r_pt[k]) + "," + std::to_string(sweep.thresholds[k]) + "\n";
  }
  return s;
}

std::string lagrangian_csv(const LagrangianCurve& curve) {
  std::string s = "mu,g\n";
  for (std::size_t k = 0; k < curve.mu.size(); ++k) s += csv_number(curve.mu[k]) + "," + csv_number(curve.g[k]) + "\n";
  return s;
}

std::string capacity_csv(const std::vector<CapacityPoint>& points) {
  std::string s = "m,mu_star,bound,threshold\n";
  for (const auto& p : points) {
    s += std::to_string(p.m) + "," + csv_number(p.mu_star) + "," + csv_number(p.bound) + "," +
         std::to_string(p.threshold) + "\n";
  }
  return s;
}

}  // namespace icu
