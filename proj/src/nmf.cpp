#include "icu/nmf.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "icu/errors.hpp"
#include "icu/generators.hpp"

namespace icu {

namespace {

constexpr int kStallSweeps = 10;
/// Rounding level of a squared residual whose entries are exact to machine precision.
constexpr double kObjectiveFloor = 1e-28;

void project_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = project_simplex(m.row(i).transpose()).transpose();
}

void project_cols(Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) = project_simplex(m.col(j));
}

double largest_eigenvalue(const Eigen::MatrixXd& gram) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

/// Projected-gradient steps on U for 0.5 ||T - U W^T||^2 with step 1/L.
void update_u(const Eigen::MatrixXd& t, Eigen::MatrixXd& u, const Eigen::MatrixXd& w, int steps) {
  const Eigen::MatrixXd gram = w.transpose() * w;
  const Eigen::MatrixXd tw = t * w;
  const double lip = largest_eigenvalue(gram);
  if (lip <= 0.0) return;
  for (int k = 0; k < steps; ++k) {
    u -= (u * gram - tw) / lip;
    project_rows(u);
  }
}

void update_w(const Eigen::MatrixXd& t, const Eigen::MatrixXd& u, Eigen::MatrixXd& w, int steps) {
  const Eigen::MatrixXd gram = u.transpose() * u;
  const Eigen::MatrixXd tu = t.transpose() * u;
  const double lip = largest_eigenvalue(gram);
  if (lip <= 0.0) return;
  for (int k = 0; k < steps; ++k) {
    w -= (w * gram - tu) / lip;
    project_cols(w);
  }
}

NmfStart random_start(int n, int cols, int rank, std::mt19937_64& rng) {
  NmfStart s{Eigen::MatrixXd(n, rank), Eigen::MatrixXd(cols, rank)};
  for (int i = 0; i < n; ++i) s.u.row(i) = dirichlet_ones(rank, rng).transpose();
  for (int l = 0; l < rank; ++l) s.w.col(l) = dirichlet_ones(cols, rng);
  return s;
}

}  // namespace

void NmfProblem::validate() const {
  if (rank < 1 || rank > target.n()) throw ValidationError("nmf: rank must lie in [1, n]");
  if (starts < 1) throw ValidationError("nmf: need at least one start");
  if (iters < 1 || inner_steps < 1) throw ValidationError("nmf: iteration counts must be positive");
  if (!(tol >= 0.0)) throw ValidationError("nmf: negative tolerance");
  for (const auto& s : warm_starts) {
    if (s.u.rows() != target.n() || s.u.cols() != rank || s.w.rows() != target.cols() || s.w.cols() != rank) {
      throw ValidationError("nmf: warm start has the wrong shape");
    }
  }
}

FactorModel NmfSolution::nominal_model() const {
  std::vector<BoxSimplexSet> sets;
  for (Eigen::Index l = 0; l < w.cols(); ++l) sets.push_back(BoxSimplexSet::singleton(w.col(l)));
  return FactorModel(u, w, std::move(sets));
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const auto m = v.size();
  std::vector<double> s(v.data(), v.data() + m);
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    cum += s[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s[k] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

double nmf_objective(const Eigen::MatrixXd& target, const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) {
  return (target - u * w.transpose()).squaredNorm();
}

NmfResiduals nmf_residuals(const Eigen::MatrixXd& target, const Eigen::MatrixXd& approximation) {
  const Eigen::MatrixXd d = (target - approximation).cwiseAbs();
  NmfResiduals r;
  r.l1 = d.sum();
  r.linf = d.maxCoeff();
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (target(i, j) > 0.0) r.relative_max = std::max(r.relative_max, d(i, j) / target(i, j));
    }
  }
  return r;
}

NmfStart spa_start(const Eigen::MatrixXd& target, int rank) {
  const auto n = target.rows();
  Eigen::MatrixXd resid = target;
  std::vector<Eigen::Index> picked;
  for (int l = 0; l < rank; ++l) {
    Eigen::Index best = 0;
    double norm = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = resid.row(i).squaredNorm();
      if (s > norm && std::find(picked.begin(), picked.end(), i) == picked.end()) {
        norm = s;
        best = i;
      }
    }
    picked.push_back(best);
    const Eigen::RowVectorXd dir = resid.row(best);
    const double dn = dir.squaredNorm();
    if (dn > 0.0) resid -= (resid * dir.transpose()) * dir / dn;
  }
  NmfStart s{Eigen::MatrixXd(n, rank), Eigen::MatrixXd(target.cols(), rank)};
  for (int l = 0; l < rank; ++l) s.w.col(l) = project_simplex(target.row(picked[l]).transpose());
  s.u = target * s.w * (s.w.transpose() * s.w).completeOrthogonalDecomposition().pseudoInverse();
  project_rows(s.u);
  return s;
}

NmfSolution nmf_refine(const Eigen::MatrixXd& target, const NmfStart& start, int iters, double tol, int inner_steps) {
  NmfSolution sol;
  sol.u = start.u;
  sol.w = start.w;
  project_rows(sol.u);
  project_cols(sol.w);
  double f = nmf_objective(target, sol.u, sol.w);
  sol.trace.push_back(f);
  int stalled = 0;
  for (int sweep = 0; sweep < iters && f > kObjectiveFloor; ++sweep) {
    update_u(target, sol.u, sol.w, inner_steps);
    update_w(target, sol.u, sol.w, inner_steps);
    const double next = nmf_objective(target, sol.u, sol.w);
    if (next > f * (1.0 + 1e-12) + kObjectiveFloor) {
      throw ConvergenceError("nmf: objective increased from " + std::to_string(f) + " to " + std::to_string(next));
    }
    sol.trace.push_back(next);
    sol.sweeps = sweep + 1;
    stalled = (f - next) < tol * f ? stalled + 1 : 0;
    f = next;
    if (stalled >= kStallSweeps) break;
  }
  sol.objective = f;
  sol.residuals = nmf_residuals(target, sol.approximation());
  return sol;
}

NmfSolution nmf_factorize(const NmfProblem& problem, std::uint64_t seed, Exec exec) {
  problem.validate();
  const Eigen::MatrixXd& t = problem.target.matrix();
  const int n = problem.target.n();
  const int cols = problem.target.cols();
  std::vector<NmfSolution> results(problem.starts);
  const int warm = static_cast<int>(problem.warm_starts.size());
  for_each_index(exec, problem.starts, [&](int s) {
    NmfStart start;
    if (s == 0) {
      start = spa_start(t, problem.rank);
    } else if (s <= warm) {
      start = problem.warm_starts[s - 1];
    } else {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
      start = random_start(n, cols, problem.rank, rng);
    }
    results[s] = nmf_refine(t, start, problem.iters, problem.tol, problem.inner_steps);
    results[s].start_index = s;
  });
  int best = 0;
  for (int s = 1; s < problem.starts; ++s) {
    if (results[s].objective < results[best].objective) best = s;
  }
  return std::move(results[best]);
}

std::vector<NmfSolution> nmf_rank_path(const NmfProblem& base, int r_lo, int r_hi, std::uint64_t seed, Exec exec) {
  if (r_lo < 1 || r_hi < r_lo || r_hi > base.target.n()) throw ValidationError("nmf: invalid rank range");
  std::vector<NmfSolution> out;
  for (int r = r_lo; r <= r_hi; ++r) {
    NmfProblem p = base;
    p.rank = r;
    p.warm_starts.clear();
    if (!out.empty()) {
      const NmfSolution& prev = out.back();
      NmfStart padded{Eigen::MatrixXd::Zero(p.target.n(), r), Eigen::MatrixXd(p.target.cols(), r)};
      padded.u.leftCols(r - 1) = prev.u;
      padded.w.leftCols(r - 1) = prev.w;
      // The new factor starts at the worst-fitted row; its weight is zero so the objective is unchanged.
      Eigen::Index worst = 0;
      (p.target.matrix() - prev.approximation()).rowwise().squaredNorm().maxCoeff(&worst);
      padded.w.col(r - 1) = project_simplex(p.target.matrix().row(worst).transpose());
      p.warm_starts.push_back(std::move(padded));
      p.starts = std::max(p.starts, 2);
    }
    out.push_back(nmf_factorize(p, seed, exec));
  }
  return out;
}

DeviationStats deviation_stats(std::vector<double> values) {
  DeviationStats st;
  if (values.empty()) return st;
  std::sort(values.begin(), values.end());
  const auto m = values.size();
  st.max = values.back();
  st.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m);
  st.median = m % 2 == 1 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(m)));
  st.p95 = values[std::max<std::size_t>(rank, 1) - 1];
  return st;
}

ResidualReport residual_report(const Eigen::MatrixXd& approximation, const TransitionKernel& target,
                               const Eigen::VectorXd& alpha) {
  const int n = target.n();
  const int cols = target.cols();
  if (approximation.rows() != n || approximation.cols() != cols) throw ValidationError("residual report: shape mismatch");
  if (alpha.size() != n || alpha.minCoeff() <= 0.0) throw ValidationError("residual report: alpha must be positive");
  ResidualReport rep;
  rep.ratios.resize(n, cols);
  rep.in_interval.resize(n, cols);
  std::vector<double> abs_dev;
  std::vector<double> rel_dev;
  std::vector<double> abs_ratio;
  double worst = -1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double d = target(i, j) - approximation(i, j);
      abs_dev.push_back(std::abs(d));
      if (target(i, j) > 0.0) rel_dev.push_back(std::abs(d) / target(i, j));
      const double ratio = d / alpha[i];
      rep.ratios(i, j) = ratio;
      abs_ratio.push_back(std::abs(ratio));
      const bool in = ratio >= -2.0 - 1e-12 && ratio <= 1.0 + 1e-12;
      rep.in_interval(i, j) = in;
      rep.out_of_interval += in ? 0 : 1;
      if (std::abs(ratio) > worst) {
        worst = std::abs(ratio);
        rep.worst_row = i;
        rep.worst_col = j;
      }
    }
  }
  rep.absolute = deviation_stats(std::move(abs_dev));
  rep.relative = deviation_stats(std::move(rel_dev));
  rep.abs_ratio = deviation_stats(std::move(abs_ratio));
  return rep;
}

Eigen::MatrixXd solve_factors_fixed_u(const Eigen::MatrixXd& target, const Eigen::MatrixXd& u, const Eigen::MatrixXd& w0,
                                      int max_iter, double tol) {
  const Eigen::MatrixXd gram = u.transpose() * u;
  const Eigen::MatrixXd tu = target.transpose() * u;
  const double lip = largest_eigenvalue(gram);
  Eigen::MatrixXd w = w0;
  project_cols(w);
  if (lip <= 0.0) return w;
  for (int k = 0; k < max_iter; ++k) {
    Eigen::MatrixXd next = w - (w * gram - tu) / lip;
    project_cols(next);
    const double step = (next - w).cwiseAbs().maxCoeff();
    w = std::move(next);
    if (step < tol) break;
  }
  return w;
}

std::vector<BoxSimplexSet> bootstrap_factor_sets(const TransitionKernel& target, const Eigen::VectorXd& alpha,
                                                 const Eigen::MatrixXd& u, const Eigen::MatrixXd& w_hat, int q,
                                                 std::uint64_t seed, Exec exec) {
  const int n = target.n();
  const int cols = target.cols();
  const auto r = u.cols();
  if (q < 2) throw ValidationError("bootstrap: need at least two samples");
  if (alpha.size() != n || alpha.minCoeff() < 0.0) throw ValidationError("bootstrap: alpha must be nonnegative");
  if (u.rows() != n || w_hat.rows() != cols || w_hat.cols() != r) throw ValidationError("bootstrap: factor shapes");

  std::vector<Eigen::MatrixXd> fits(q);
  for_each_index(exec, q, [&](int m) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::MatrixXd t(n, cols);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double lo = std::max(0.0, target(i, j) - alpha[i]);
        const double hi = std::min(1.0, target(i, j) + 2.0 * alpha[i]);
        t(i, j) = lo + (hi - lo) * u01(rng);
      }
    }
    project_rows(t);
    fits[m] = solve_factors_fixed_u(t, u, w_hat);
  });

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(cols, r);
  for (const auto& f : fits) mean += f;
  mean /= q;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(cols, r);
  for (const auto& f : fits) var += (f - mean).cwiseAbs2();
  var /= (q - 1);
  const Eigen::MatrixXd half = 1.96 * var.cwiseSqrt() / std::sqrt(static_cast<double>(q));

  std::vector<BoxSimplexSet> sets;
  for (Eigen::Index l = 0; l < r; ++l) {
    const Eigen::VectorXd h = half.col(l);
    sets.push_back(BoxSimplexSet::around(w_hat.col(l), h, h));
  }
  return sets;
}

FactorModel build_u_min(const NmfSolution& solution, const Eigen::VectorXd& alpha) {
  if (alpha.size() == 0 || alpha.minCoeff() < 0.0) throw ValidationError("u_min: alpha must be nonnegative");
  const double a = alpha.minCoeff();
  std::vector<BoxSimplexSet> sets;
  for (Eigen::Index l = 0; l < solution.w.cols(); ++l) sets.push_back(BoxSimplexSet::around(solution.w.col(l), a, 2.0 * a));
  return FactorModel(solution.u, solution.w, std::move(sets));
}

}  // namespace icu
