#include "icu/generators.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "icu/errors.hpp"
#include "icu/mdp.hpp"
#include "icu/policy.hpp"

namespace icu {

namespace {

double uniform(std::mt19937_64& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

int uniform_int(std::mt19937_64& rng, int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }

/// Splits exit mass `e` among (CR, RL, D) so that the expected exit reward per unit of mass equals `v`.
Eigen::Vector3d exit_split(double e, double v, const MdpRewards& r, std::mt19937_64& rng) {
  double c = uniform(rng, 0.0, 1.0);
  double m = c * r.r_CR + (1.0 - c) * r.r_D;
  if (v < m) {
    c = r.r_CR < r.r_D ? 1.0 : 0.0;
    m = std::min(r.r_CR, r.r_D);
  }
  const double f_rl = r.r_RL > m ? std::clamp((v - m) / (r.r_RL - m), 0.0, 1.0) : 1.0;
  Eigen::Vector3d out;
  out[kCR] = e * (1.0 - f_rl) * c;
  out[kRL] = e * f_rl;
  out[kD] = e * (1.0 - f_rl) * (1.0 - c);
  return out;
}

/**
 * Decreasing outside options for increasing exit masses, or false when the draw cannot be completed.
 * `shrink` bounds how far each step may drop towards its lower limit.
 */
bool decreasing_outside(const Eigen::VectorXd& exit, const MdpRewards& r, double shrink, std::mt19937_64& rng,
                        Eigen::VectorXd& out) {
  const double v_hi = r.r_RL;
  const double v_lo = std::min(r.r_CR, r.r_D);
  const auto m = exit.size();
  out.resize(m);
  out[0] = exit[0] * uniform(rng, v_lo + 0.5 * (v_hi - v_lo), v_hi);
  for (Eigen::Index k = 1; k < m; ++k) {
    const double lo = exit[k] * v_lo;
    const double hi = std::min(out[k - 1], exit[k] * v_hi);
    if (lo > hi) return false;
    out[k] = hi - uniform(rng, 0.0, shrink) * (hi - lo);
  }
  return true;
}

}  // namespace

Eigen::VectorXd dirichlet_ones(int m, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  Eigen::VectorXd x(m);
  for (int j = 0; j < m; ++j) x[j] = gamma(rng);
  return x / x.sum();
}

RewardSpec random_reward_spec(std::mt19937_64& rng) {
  std::array<double, 6> v{};
  for (double& x : v) x = uniform(rng, 0.0, 1.0);
  std::sort(v.begin(), v.end());
  const double scale = uniform(rng, 10.0, 1000.0);
  RewardSpec s;
  s.r_PT_D = scale * v[0];
  s.r_CR_D = scale * v[1];
  s.r_D = scale * v[2];
  s.r_CR_RL = scale * v[3];
  s.r_PT_RL = scale * v[4];
  s.r_RL = scale * v[5];
  s.d_A = uniform(rng, 0.0, 0.2);
  s.d_C = uniform(rng, 0.0, 0.8);
  s.lambda = uniform(rng, 0.5, 0.99);
  s.r_W = uniform(rng, 0.05, 1.0) * (1.0 - s.lambda) * s.r_RL;
  s.validate();
  return s;
}

Instance generate_instance(std::mt19937_64& rng, const GeneratorOptions& options) {
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const int n = uniform_int(rng, options.n_min, options.n_max);
    const RewardSpec spec = random_reward_spec(rng);
    const MdpRewards r(spec);
    if (!check_assumption_0(r)) continue;
    const MdpRewards target = options.conditions_at_zero_transfer_reward ? r.with_r_pt(0.0) : r;
    const double rho = target.transfer_ratio();

    Eigen::VectorXd stay(n);
    stay[0] = uniform(rng, 0.05, 0.95);
    for (int i = 1; i < n; ++i) stay[i] = stay[i - 1] * rho * uniform(rng, 0.2, 1.0) * (1.0 - 1e-9);
    const Eigen::VectorXd exit = Eigen::VectorXd::Ones(n) - stay;

    Eigen::VectorXd out;
    if (!decreasing_outside(exit, r, 0.5, rng, out)) continue;

    Eigen::MatrixXd rows(n, n + 3);
    for (int i = 0; i < n; ++i) {
      rows.row(i).head(n) = stay[i] * dirichlet_ones(n, rng).transpose();
      rows.row(i).tail(3) = exit_split(exit[i], out[i] / exit[i], r, rng).transpose();
    }
    Instance inst{TransitionKernel::normalized(std::move(rows)), spec, r, dirichlet_ones(n, rng)};
    if (!check_assumption_1(inst.kernel, target).all()) continue;
    if (!check_assumption_1(inst.kernel, inst.rewards).all()) continue;
    return inst;
  }
  throw ConvergenceError("generate_instance: no admissible instance within the attempt budget");
}

RobustInstance generate_robust_instance(std::mt19937_64& rng, const GeneratorOptions& options) {
  for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
    const int n = uniform_int(rng, std::max(2, options.n_min), options.n_max);
    const RewardSpec spec = random_reward_spec(rng);
    const MdpRewards r(spec);
    if (!check_assumption_0(r)) continue;
    const double rho = r.transfer_ratio();

    // Adjacent rows sit delta apart on the factor axis; a factor step with ratio q shrinks the ward mass by 1 - delta (1 - q).
    const int r_min = std::max(2, static_cast<int>(std::ceil(1.0 + (n - 1) * (1.0 - rho) / 0.45)));
    if (r_min > n) continue;
    const int rank = uniform_int(rng, r_min, std::min(n, r_min + 3));
    const double delta = static_cast<double>(rank - 1) / (n - 1);

    Eigen::VectorXd sigma(rank);
    sigma[0] = uniform(rng, 0.3, 0.95);
    for (int l = 1; l < rank; ++l) sigma[l] = sigma[l - 1] * uniform(rng, 0.02, 0.25);
    const Eigen::VectorXd exit = Eigen::VectorXd::Ones(rank) - sigma;
    Eigen::VectorXd out;
    if (!decreasing_outside(exit, r, 0.8, rng, out)) continue;

    Eigen::MatrixXd w(n + 3, rank);
    for (int l = 0; l < rank; ++l) {
      w.col(l).head(n) = sigma[l] * dirichlet_ones(n, rng);
      w.col(l).tail(3) = exit_split(exit[l], out[l] / exit[l], r, rng);
      w.col(l) /= w.col(l).sum();
    }
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, rank);
    for (int i = 0; i < n; ++i) {
      const double t = std::min(i * delta, static_cast<double>(rank - 1));
      const int a = std::min(static_cast<int>(std::floor(t)), rank - 1);
      const double f = t - a;
      if (a == rank - 1 || f <= 0.0) {
        u(i, a) = 1.0;
      } else {
        u(i, a) = 1.0 - f;
        u(i, a + 1) = f;
      }
    }

    std::vector<BoxSimplexSet> exact;
    for (int l = 0; l < rank; ++l) exact.push_back(BoxSimplexSet::singleton(w.col(l)));
    FactorModel nominal(u, w, exact);
    if (!check_assumption_3(nominal, r).holds) continue;

    double eps = uniform(rng, 0.05, 0.6);
    for (int k = 0; k < 40; ++k, eps *= 0.5) {
      std::vector<BoxSimplexSet> sets;
      for (int l = 0; l < rank; ++l) {
        const Eigen::VectorXd wl = w.col(l);
        sets.push_back(BoxSimplexSet::around(wl, eps * wl, 2.0 * eps * wl));
      }
      FactorModel model(u, w, std::move(sets));
      if (!check_assumption_3(model, r).holds) continue;
      // Move r_PT between the worst-case and nominal continuation of a random score under the
      // never-transfer policy, where the robust and nominal decisions can disagree.
      const Eigen::VectorXd p0 = dirichlet_ones(n, rng);
      const TransferPolicy never(Eigen::VectorXd::Zero(n));
      const WorstCase wc = worst_case_kernel(never, model, r, p0);
      const Eigen::VectorXd c_nom = continuation(model.nominal_kernel(), evaluate_policy(never, model.nominal_kernel(), r));
      const Eigen::VectorXd c_wc = continuation(wc.kernel, wc.value);
      MdpRewards moved = r;
      for (int tries = 0; tries < 8; ++tries) {
        const int i = uniform_int(rng, 0, n - 1);
        const double r_pt = std::min(uniform(rng, c_wc[i], c_nom[i]), r.r_RL);
        if (r_pt < 0.0) continue;
        const MdpRewards candidate = r.with_r_pt(r_pt);
        if (check_assumption_0(candidate) && check_assumption_3(model, candidate).holds) {
          moved = candidate;
          break;
        }
      }
      Instance base{model.nominal_kernel(), spec, moved, p0};
      return RobustInstance{std::move(base), std::move(model)};
    }
  }
  throw ConvergenceError("generate_robust_instance: no admissible instance within the attempt budget");
}

Instance counterexample_instance() {
  RewardSpec spec;
  spec.lambda = 0.01;
  spec.r_W = 1.6;
  spec.r_RL = 3.0;
  spec.r_D = 1.5;
  spec.r_PT_RL = 2.0;
  spec.r_PT_D = 1.5;
  spec.d_A = 0.0;
  spec.r_CR_RL = 2.0;
  spec.r_CR_D = 1.5;
  spec.d_C = 0.0;
  Eigen::MatrixXd rows(2, 5);
  // Columns: S1, S2, CR, RL, D.
  rows << 0.0, 0.4, 0.0, 0.3, 0.3,  //
      0.0, 0.0, 0.4, 0.3, 0.3;
  Instance inst{TransitionKernel(rows), spec, MdpRewards(spec), point_mass(2, 0)};
  return inst;
}

TransitionKernel absorbing_kernel(int n, Exit e) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(n, n + 3);
  rows.col(n + e).setOnes();
  return TransitionKernel(std::move(rows));
}

Eigen::VectorXd point_mass(int n, int i) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  p[i] = 1.0;
  return p;
}

}  // namespace icu
