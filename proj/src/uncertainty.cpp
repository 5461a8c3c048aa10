#include "icu/uncertainty.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "icu/errors.hpp"

namespace icu {

namespace {

constexpr double kFeasTol = 1e-12;

double scale_of(const Eigen::VectorXd& v) { return std::max(1.0, v.lpNorm<Eigen::Infinity>()); }

Eigen::VectorXd ward_indicator(int n) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 3);
  g.head(n).setOnes();
  return g;
}

Eigen::VectorXd exit_rewards(int n, const MdpRewards& rewards) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 3);
  g[n + kCR] = rewards.r_CR;
  g[n + kRL] = rewards.r_RL;
  g[n + kD] = rewards.r_D;
  return g;
}

/// Minimum of coef * (cost . w) over the set, with the minimizer.
InnerMin signed_min(double coef, const Eigen::VectorXd& cost, const BoxSimplexSet& set) {
  InnerMin m = coef >= 0.0 ? inner_min_box_simplex(cost, set) : inner_max_box_simplex(cost, set);
  m.value *= coef;
  return m;
}

}  // namespace

BoxSimplexSet::BoxSimplexSet(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  validate();
}

void BoxSimplexSet::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) throw ValidationError("box-simplex set: bad bound sizes");
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (!(lower[j] >= 0.0) || !(upper[j] <= 1.0) || !(lower[j] <= upper[j])) {
      std::ostringstream os;
      os << "box-simplex set: invalid bounds [" << lower[j] << ", " << upper[j] << "] at coordinate " << j;
      throw ValidationError(os.str());
    }
  }
  if (lower.sum() > 1.0 + kFeasTol || upper.sum() < 1.0 - kFeasTol) {
    std::ostringstream os;
    os << "box-simplex set is empty: sum(lower) = " << lower.sum() << ", sum(upper) = " << upper.sum();
    throw InfeasibleError(os.str());
  }
}

bool BoxSimplexSet::contains(const Eigen::VectorXd& w, double tol) const {
  if (w.size() != lower.size()) return false;
  if (std::abs(w.sum() - 1.0) > tol) return false;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w[j] < lower[j] - tol || w[j] > upper[j] + tol) return false;
  }
  return true;
}

BoxSimplexSet BoxSimplexSet::singleton(const Eigen::VectorXd& w) { return BoxSimplexSet(w, w); }

BoxSimplexSet BoxSimplexSet::around(const Eigen::VectorXd& w, const Eigen::VectorXd& below,
                                    const Eigen::VectorXd& above) {
  Eigen::VectorXd lo = (w - below).cwiseMax(0.0).cwiseMin(1.0);
  Eigen::VectorXd hi = (w + above).cwiseMax(0.0).cwiseMin(1.0);
  return BoxSimplexSet(std::move(lo), std::move(hi));
}

BoxSimplexSet BoxSimplexSet::around(const Eigen::VectorXd& w, double below, double above) {
  const auto m = w.size();
  return around(w, Eigen::VectorXd::Constant(m, below), Eigen::VectorXd::Constant(m, above));
}

InnerMin inner_min_box_simplex(const Eigen::VectorXd& cost, const BoxSimplexSet& set) {
  const int m = set.size();
  if (cost.size() != m) throw ValidationError("inner_min: cost and set sizes differ");
  if (set.lower.sum() > 1.0 + kFeasTol || set.upper.sum() < 1.0 - kFeasTol) {
    throw InfeasibleError("inner_min: empty box-simplex set");
  }
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return cost[a] < cost[b]; });
  InnerMin out;
  out.w = set.lower;
  double rem = 1.0 - set.lower.sum();
  for (int j : order) {
    if (rem <= 0.0) break;
    const double add = std::min(set.upper[j] - set.lower[j], rem);
    out.w[j] += add;
    rem -= add;
  }
  out.value = cost.dot(out.w);
#ifndef NDEBUG
  assert(certify_inner_min(cost, set, out, 1e-9 * scale_of(cost)));
#endif
  return out;
}

InnerMin inner_max_box_simplex(const Eigen::VectorXd& cost, const BoxSimplexSet& set) {
  InnerMin out = inner_min_box_simplex(-cost, set);
  out.value = -out.value;
  return out;
}

bool certify_inner_min(const Eigen::VectorXd& cost, const BoxSimplexSet& set, const InnerMin& sol, double tol) {
  if (!set.contains(sol.w, 1e-12)) return false;
  const int m = set.size();
  double nu = cost.minCoeff();
  bool any = false;
  for (int j = 0; j < m; ++j) {
    if (sol.w[j] > set.lower[j]) {
      nu = any ? std::max(nu, cost[j]) : cost[j];
      any = true;
    }
  }
  double dual = nu;
  for (int j = 0; j < m; ++j) {
    const double d = cost[j] - nu;
    dual += d >= 0.0 ? d * set.lower[j] : d * set.upper[j];
  }
  return std::abs(dual - sol.value) <= tol;
}

FactorModel::FactorModel(Eigen::MatrixXd u, Eigen::MatrixXd w_nominal, std::vector<BoxSimplexSet> factor_sets)
    : u_(std::move(u)), w_(std::move(w_nominal)), sets_(std::move(factor_sets)) {
  const auto n = u_.rows();
  const auto r = u_.cols();
  if (n < 1 || r < 1) throw ValidationError("factor model: empty U");
  if (w_.rows() != n + 3 || w_.cols() != r) throw ValidationError("factor model: W must be (n+3) x r");
  if (static_cast<Eigen::Index>(sets_.size()) != r) throw ValidationError("factor model: need one set per factor");
  if (u_.minCoeff() < 0.0 || w_.minCoeff() < 0.0) throw ValidationError("factor model: negative entries");
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = u_.row(i).sum();
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("factor model: row " + std::to_string(i + 1) + " of U");
    u_.row(i) /= s;
  }
  for (Eigen::Index l = 0; l < r; ++l) {
    const double s = w_.col(l).sum();
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("factor model: column " + std::to_string(l + 1) + " of W");
    w_.col(l) /= s;
    if (sets_[l].size() != n + 3) throw ValidationError("factor model: set size mismatch");
    sets_[l].validate();
    if (!sets_[l].contains(w_.col(l), 1e-9)) {
      throw ValidationError("factor model: nominal factor " + std::to_string(l + 1) + " outside its set");
    }
  }
}

TransitionKernel FactorModel::nominal_kernel() const { return TransitionKernel::normalized(u_ * w_.transpose()); }

TransitionKernel FactorModel::kernel_for(const std::vector<Eigen::VectorXd>& factors) const {
  if (static_cast<int>(factors.size()) != rank()) throw ValidationError("factor model: wrong factor count");
  Eigen::MatrixXd w(n() + 3, rank());
  for (int l = 0; l < rank(); ++l) w.col(l) = factors[l];
  return TransitionKernel::normalized(u_ * w.transpose());
}

bool FactorModel::contains_factors(const std::vector<Eigen::VectorXd>& factors, double tol) const {
  if (static_cast<int>(factors.size()) != rank()) return false;
  for (int l = 0; l < rank(); ++l) {
    if (!sets_[l].contains(factors[l], tol)) return false;
  }
  return true;
}

FactorModel FactorModel::singleton() const {
  std::vector<BoxSimplexSet> sets;
  for (int l = 0; l < rank(); ++l) sets.push_back(BoxSimplexSet::singleton(w_.col(l)));
  return FactorModel(u_, w_, std::move(sets));
}

RectangularSet::RectangularSet(TransitionKernel nominal, std::vector<BoxSimplexSet> rows)
    : nominal_(std::move(nominal)), rows_(std::move(rows)) {
  if (static_cast<int>(rows_.size()) != nominal_.n()) throw ValidationError("rectangular set: one box per row");
  for (int i = 0; i < nominal_.n(); ++i) {
    if (rows_[i].size() != nominal_.cols()) throw ValidationError("rectangular set: box size mismatch");
    rows_[i].validate();
    if (!rows_[i].contains(nominal_.matrix().row(i).transpose(), 1e-9)) {
      throw ValidationError("rectangular set: nominal row " + std::to_string(i + 1) + " outside its box");
    }
  }
}

RectangularSet RectangularSet::from_alpha(const TransitionKernel& nominal, const Eigen::VectorXd& alpha) {
  if (alpha.size() != nominal.n()) throw ValidationError("rectangular set: alpha length must equal n");
  std::vector<BoxSimplexSet> rows;
  for (int i = 0; i < nominal.n(); ++i) {
    if (!(alpha[i] >= 0.0)) throw ValidationError("rectangular set: alpha must be nonnegative");
    rows.push_back(BoxSimplexSet::around(nominal.matrix().row(i).transpose(), alpha[i], 2.0 * alpha[i]));
  }
  return RectangularSet(nominal, std::move(rows));
}

bool RectangularSet::contains(const TransitionKernel& kernel, double tol) const {
  if (kernel.n() != n()) return false;
  for (int i = 0; i < n(); ++i) {
    if (!rows_[i].contains(kernel.matrix().row(i).transpose(), tol)) return false;
  }
  return true;
}

int set_size_n(const UncertaintySet& set) {
  return std::visit([](const auto& s) { return s.n(); }, set);
}

TransitionKernel nominal_kernel(const UncertaintySet& set) {
  if (const auto* f = std::get_if<FactorModel>(&set)) return f->nominal_kernel();
  return std::get<RectangularSet>(set).nominal();
}

AdversaryChoice adversary_response(const ValueVector& v, const UncertaintySet& set, Exec exec) {
  const int n = set_size_n(set);
  if (v.size() != n + 4) throw ValidationError("adversary_response: value vector length mismatch");
  const Eigen::VectorXd vbar = v.head(n + 3);
  AdversaryChoice out;
  if (const auto* f = std::get_if<FactorModel>(&set)) {
    const int r = f->rank();
    Eigen::VectorXd m(r);
    out.choices.resize(r);
    for_each_index(exec, r, [&](int l) {
      InnerMin im = inner_min_box_simplex(vbar, f->factor_sets()[l]);
      m[l] = im.value;
      out.choices[l] = std::move(im.w);
    });
    out.continuation = f->u() * m;
  } else {
    const auto& rect = std::get<RectangularSet>(set);
    out.continuation.resize(n);
    out.choices.resize(n);
    for_each_index(exec, n, [&](int i) {
      InnerMin im = inner_min_box_simplex(vbar, rect.rows()[i]);
      out.continuation[i] = im.value;
      out.choices[i] = std::move(im.w);
    });
  }
  return out;
}

TransitionKernel kernel_from_choice(const UncertaintySet& set, const std::vector<Eigen::VectorXd>& choices) {
  if (const auto* f = std::get_if<FactorModel>(&set)) return f->kernel_for(choices);
  const int n = set_size_n(set);
  if (static_cast<int>(choices.size()) != n) throw ValidationError("kernel_from_choice: one row per score");
  Eigen::MatrixXd rows(n, n + 3);
  for (int i = 0; i < n; ++i) rows.row(i) = choices[i].transpose();
  return TransitionKernel::normalized(std::move(rows));
}

BellmanResult robust_bellman_apply(const ValueVector& v, const UncertaintySet& set, const MdpRewards& rewards,
                                   Exec exec) {
  const int n = set_size_n(set);
  const AdversaryChoice adv = adversary_response(v, set, exec);
  const double transfer = rewards.r_W + rewards.lambda * rewards.r_PT;
  BellmanResult out{ValueVector(n + 4), TransferPolicy(Eigen::VectorXd::Zero(n))};
  for (int i = 0; i < n; ++i) {
    const double stay = rewards.r_W + rewards.lambda * adv.continuation[i];
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

WorstCase worst_case_kernel(const TransferPolicy& policy, const UncertaintySet& set, const MdpRewards& rewards,
                            const Eigen::VectorXd& p0, double tol, int max_iter) {
  const int n = set_size_n(set);
  if (policy.n() != n) throw ValidationError("worst_case_kernel: policy length mismatch");
  if (!(tol > 0.0)) throw ValidationError("worst_case_kernel: tol must be positive");
  rewards.validate();
  validate_distribution(p0, 1e-12, "initial distribution");
  if (p0.size() != n) throw ValidationError("worst_case_kernel: initial distribution length mismatch");

  WorstCase wc;
  wc.kernel = nominal_kernel(set);
  wc.value = evaluate_policy(policy, wc.kernel, rewards);
  if (const auto* f = std::get_if<FactorModel>(&set)) {
    for (int l = 0; l < f->rank(); ++l) wc.factors.push_back(f->w_nominal().col(l));
  }
  // Policy iteration for the adversary: each step moves to the minimizing response and re-evaluates exactly.
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    AdversaryChoice adv = adversary_response(wc.value, set);
    TransitionKernel k = kernel_from_choice(set, adv.choices);
    ValueVector v = evaluate_policy(policy, k, rewards);
    const double drop = (wc.value.head(n) - v.head(n)).maxCoeff();
    if (drop <= 1e-13 * scale_of(wc.value)) {
      converged = true;
      break;
    }
    wc.kernel = std::move(k);
    wc.value = std::move(v);
    if (std::holds_alternative<FactorModel>(set)) wc.factors = std::move(adv.choices);
  }
  if (!converged) throw ConvergenceError("worst_case_kernel: adversary iteration did not settle");

  // Fixed-point residual of the adversary-only operator at the exact value.
  const AdversaryChoice adv = adversary_response(wc.value, set);
  const double transfer = rewards.r_W + rewards.lambda * rewards.r_PT;
  double residual = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = policy.probs[i];
    const double next = p * transfer + (1.0 - p) * (rewards.r_W + rewards.lambda * adv.continuation[i]);
    residual = std::max(residual, std::abs(next - wc.value[i]));
  }
  if (residual > std::max(tol, 1e-12 * scale_of(wc.value))) {
    throw ConvergenceError("worst_case_kernel: residual " + std::to_string(residual) + " above tolerance");
  }
  wc.reward = p0.dot(wc.value.head(n));
  return wc;
}

RobustSolution robust_value_iteration(const UncertaintySet& set, const MdpRewards& rewards,
                                      const RobustOptions& options) {
  if (!(options.tol > 0.0)) throw ValidationError("robust_value_iteration: tol must be positive");
  rewards.validate();
  if (!options.waive_assumption) {
    const Assumption3Report rep = check_assumption_3(set, rewards);
    if (!rep.holds) throw ValidationError("robust_value_iteration: " + rep.describe());
  }
  const int n = set_size_n(set);
  ValueVector v = initial_value(n, rewards);
  RobustSolution sol;
  bool converged = false;
  for (int it = 1; it <= options.max_iter; ++it) {
    BellmanResult next = robust_bellman_apply(v, set, rewards, options.exec);
    const double diff = (next.value - v).lpNorm<Eigen::Infinity>();
    v = std::move(next.value);
    sol.policy = std::move(next.policy);
    sol.iterations = it;
    if (diff < options.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("robust_value_iteration: no convergence within " + std::to_string(options.max_iter) +
                           " iterations");
  }
  const Eigen::VectorXd p0 = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (int k = 0; k < n + 2; ++k) {
    WorstCase wc = worst_case_kernel(sol.policy, set, rewards, p0, options.tol);
    BellmanResult check = robust_bellman_apply(wc.value, set, rewards, options.exec);
    sol.value = std::move(wc.value);
    sol.worst_kernel = std::move(wc.kernel);
    sol.worst_factors = std::move(wc.factors);
    if (check.policy == sol.policy) break;
    sol.policy = std::move(check.policy);
  }
  return sol;
}

std::string Assumption3Report::describe() const {
  std::ostringstream os;
  if (holds) {
    os << "structural conditions hold over the set (ratio margin " << min_ratio_margin << ", outside-option margin "
       << min_outside_margin << ")";
    return os.str();
  }
  os << "structural conditions fail:";
  if (ratio_witness_row >= 0) {
    os << " ward-mass ratio between scores " << ratio_witness_row + 1 << " and " << ratio_witness_row + 2
       << " (margin " << min_ratio_margin << ")";
  }
  if (outside_witness_row >= 0) {
    os << " outside option between scores " << outside_witness_row + 1 << " and " << outside_witness_row + 2
       << " (margin " << min_outside_margin << ")";
  }
  return os.str();
}

Assumption3Report check_assumption_3(const UncertaintySet& set, const MdpRewards& rewards, double tol) {
  const int n = set_size_n(set);
  const double rho = rewards.transfer_ratio();
  const Eigen::VectorXd g = ward_indicator(n);
  const Eigen::VectorXd o = exit_rewards(n, rewards);
  const double out_scale = std::max(1.0, o.lpNorm<Eigen::Infinity>());

  Assumption3Report rep;
  rep.min_ratio_margin = std::numeric_limits<double>::infinity();
  rep.min_outside_margin = std::numeric_limits<double>::infinity();
  std::vector<Eigen::VectorXd> ratio_choice;
  std::vector<Eigen::VectorXd> outside_choice;
  int ratio_row = 0;
  int outside_row = 0;

  // Each margin is linear in the free vectors, so its minimum splits into independent per-vector problems.
  auto minimize = [&](int i, const Eigen::VectorXd& cost, double a, double b,
                      std::vector<Eigen::VectorXd>& choice) -> double {
    double total = 0.0;
    if (const auto* f = std::get_if<FactorModel>(&set)) {
      choice.assign(f->rank(), Eigen::VectorXd());
      for (int l = 0; l < f->rank(); ++l) {
        const double coef = a * f->u()(i, l) - b * f->u()(i + 1, l);
        InnerMin m = signed_min(coef, cost, f->factor_sets()[l]);
        total += m.value;
        choice[l] = std::move(m.w);
      }
    } else {
      const auto& rect = std::get<RectangularSet>(set);
      choice.assign(n, Eigen::VectorXd());
      for (int k = 0; k < n; ++k) choice[k] = rect.nominal().matrix().row(k).transpose();
      InnerMin lo = signed_min(a, cost, rect.rows()[i]);
      InnerMin hi = signed_min(-b, cost, rect.rows()[i + 1]);
      total = lo.value + hi.value;
      choice[i] = std::move(lo.w);
      choice[i + 1] = std::move(hi.w);
    }
    return total;
  };

  for (int i = 0; i + 1 < n; ++i) {
    std::vector<Eigen::VectorXd> c3;
    const double m3 = minimize(i, g, rho, 1.0, c3);
    if (m3 < rep.min_ratio_margin) {
      rep.min_ratio_margin = m3;
      ratio_choice = std::move(c3);
      ratio_row = i;
    }
    std::vector<Eigen::VectorXd> c2;
    const double m2 = minimize(i, o, 1.0, 1.0, c2);
    if (m2 < rep.min_outside_margin) {
      rep.min_outside_margin = m2;
      outside_choice = std::move(c2);
      outside_row = i;
    }
  }
  if (n < 2) {
    rep.min_ratio_margin = 0.0;
    rep.min_outside_margin = 0.0;
    return rep;
  }
  const bool ratio_ok = rep.min_ratio_margin >= -tol;
  const bool outside_ok = rep.min_outside_margin >= -tol * out_scale;
  rep.holds = ratio_ok && outside_ok;
  if (!ratio_ok) rep.ratio_witness_row = ratio_row;
  if (!outside_ok) rep.outside_witness_row = outside_row;
  if (!rep.holds) {
    const bool use_ratio = !ratio_ok && (outside_ok || rep.min_ratio_margin * out_scale <= rep.min_outside_margin);
    rep.witness_kernel = kernel_from_choice(set, use_ratio ? ratio_choice : outside_choice);
  }
  return rep;
}

TransitionKernel sample_kernel(const UncertaintySet& set, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  auto sample_box = [&](const BoxSimplexSet& box) {
    constexpr int kVertices = 4;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(box.size());
    double total = 0.0;
    for (int k = 0; k < kVertices; ++k) {
      Eigen::VectorXd cost(box.size());
      for (int j = 0; j < box.size(); ++j) cost[j] = normal(rng);
      const double a = gamma(rng);
      w += a * inner_min_box_simplex(cost, box).w;
      total += a;
    }
    return Eigen::VectorXd(w / total);
  };
  std::vector<Eigen::VectorXd> choices;
  if (const auto* f = std::get_if<FactorModel>(&set)) {
    for (const auto& box : f->factor_sets()) choices.push_back(sample_box(box));
  } else {
    for (const auto& box : std::get<RectangularSet>(set).rows()) choices.push_back(sample_box(box));
  }
  return kernel_from_choice(set, choices);
}

MaxPrincipleReport verify_max_principle(const RobustSolution& robust, const UncertaintySet& set,
                                        const MdpRewards& rewards, const std::vector<TransferPolicy>& candidates,
                                        const std::vector<TransitionKernel>& samples, double tol) {
  const int n = set_size_n(set);
  MaxPrincipleReport rep;
  rep.worst_gap = -std::numeric_limits<double>::infinity();
  auto record = [&](MaxPrincipleKind kind, const ValueVector& lhs, const ValueVector& rhs, const std::string& who) {
    ++rep.checks;
    const double gap = (lhs.head(n) - rhs.head(n)).maxCoeff();
    rep.worst_gap = std::max(rep.worst_gap, gap);
    if (gap > tol) rep.violations.push_back({kind, who, gap});
  };
  std::vector<ValueVector> nominal_opt(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    nominal_opt[s] = value_iteration(samples[s], rewards).value;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      record(MaxPrincipleKind::nominal_dominance, evaluate_policy(candidates[c], samples[s], rewards), nominal_opt[s],
             "sample " + std::to_string(s) + ", candidate " + std::to_string(c));
    }
  }
  const Eigen::VectorXd p0 = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const WorstCase wc = worst_case_kernel(candidates[c], set, rewards, p0);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      record(MaxPrincipleKind::worst_case_minimality, wc.value, evaluate_policy(candidates[c], samples[s], rewards),
             "candidate " + std::to_string(c) + ", sample " + std::to_string(s));
    }
    record(MaxPrincipleKind::robust_dominance, wc.value, robust.value, "candidate " + std::to_string(c));
  }
  return rep;
}

}  // namespace icu
