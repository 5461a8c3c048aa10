#include <gtest/gtest.h>

#include <random>

#include "icu/errors.hpp"
#include "icu/generators.hpp"
#include "icu/nmf.hpp"
#include "oracles.hpp"

using namespace icu;

namespace {

struct Planted {
  Eigen::MatrixXd u;
  Eigen::MatrixXd w;
  TransitionKernel kernel() const { return TransitionKernel(u * w.transpose()); }
};

Planted planted(int n, int r, std::mt19937_64& rng) {
  Planted p{Eigen::MatrixXd(n, r), Eigen::MatrixXd(n + 3, r)};
  for (int i = 0; i < n; ++i) p.u.row(i) = dirichlet_ones(r, rng).transpose();
  for (int l = 0; l < r; ++l) p.w.col(l) = dirichlet_ones(n + 3, rng);
  return p;
}

NmfProblem problem(const TransitionKernel& t, int rank, int starts, int iters = 3000) {
  NmfProblem p;
  p.target = t;
  p.rank = rank;
  p.starts = starts;
  p.iters = iters;
  p.tol = 1e-12;
  return p;
}

void expect_feasible(const NmfSolution& s) {
  EXPECT_GE(s.u.minCoeff(), 0.0);
  EXPECT_GE(s.w.minCoeff(), 0.0);
  EXPECT_LE((s.u.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  EXPECT_LE((s.w.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
}

const Eigen::VectorXd kPublishedAlpha =
    1e-4 * (Eigen::VectorXd(10) << 4, 8, 10, 14, 15, 43, 46, 47, 46, 45).finished();

}  // namespace

TEST(ProjectSimplex, Examples) {
  EXPECT_TRUE(project_simplex(Eigen::Vector2d(0.2, 0.8)).isApprox(Eigen::Vector2d(0.2, 0.8)));
  EXPECT_TRUE(project_simplex(Eigen::Vector2d(2.0, 0.0)).isApprox(Eigen::Vector2d(1.0, 0.0)));
  EXPECT_TRUE(project_simplex(Eigen::Vector2d(0.6, 0.6)).isApprox(Eigen::Vector2d(0.5, 0.5)));
  EXPECT_TRUE(project_simplex(Eigen::Vector3d(-1.0, -1.0, -1.0)).isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
}

TEST(ProjectSimplex, MatchesBisectionOracleAndIsIdempotent) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 15);
  for (int t = 0; t < 10000; ++t) {
    const int m = dim(rng);
    Eigen::VectorXd v(m);
    for (int j = 0; j < m; ++j) v[j] = 2.0 * normal(rng);
    const Eigen::VectorXd p = project_simplex(v);
    ASSERT_LT((p - oracle::bisect_project_simplex(v)).cwiseAbs().maxCoeff(), 1e-9) << "trial " << t;
    ASSERT_NEAR(p.sum(), 1.0, 1e-12);
    ASSERT_GE(p.minCoeff(), 0.0);
    ASSERT_LT((project_simplex(p) - p).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Nmf, RejectsInvalidProblems) {
  std::mt19937_64 rng(2);
  const Instance inst = generate_instance(rng);
  EXPECT_THROW(nmf_factorize(problem(inst.kernel, inst.kernel.n() + 1, 1), 1), ValidationError);
  EXPECT_THROW(nmf_factorize(problem(inst.kernel, 0, 1), 1), ValidationError);
  EXPECT_THROW(nmf_factorize(problem(inst.kernel, 1, 0), 1), ValidationError);
}

TEST(Nmf, FullRankIsExact) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const Instance inst = generate_instance(rng);
    const NmfSolution s = nmf_factorize(problem(inst.kernel, inst.kernel.n(), 4), 11);
    EXPECT_LE(s.residuals.linf, 1e-8);
    expect_feasible(s);
  }
}

TEST(Nmf, RankOneIsTheMeanRow) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Instance inst = generate_instance(rng);
    const NmfSolution s = nmf_factorize(problem(inst.kernel, 1, 3), 5);
    const Eigen::VectorXd mean = inst.kernel.matrix().colwise().mean().transpose();
    EXPECT_LT((s.w.col(0) - mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(s.u.isApprox(Eigen::MatrixXd::Ones(inst.kernel.n(), 1)));
  }
}

TEST(Nmf, RecoversPlantedRankThree) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 3; ++t) {
    const Planted p = planted(10, 3, rng);
    const NmfSolution s = nmf_factorize(problem(p.kernel(), 3, 30), 17);
    EXPECT_LE(s.residuals.linf, 1e-6);
    expect_feasible(s);
  }
}

TEST(Nmf, ObjectiveTraceIsMonotone) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const Instance inst = generate_instance(rng);
    const int r = std::max(1, inst.kernel.n() / 2);
    std::mt19937_64 start_rng(t);
    NmfStart start{Eigen::MatrixXd(inst.kernel.n(), r), Eigen::MatrixXd(inst.kernel.cols(), r)};
    for (int i = 0; i < inst.kernel.n(); ++i) start.u.row(i) = dirichlet_ones(r, start_rng).transpose();
    for (int l = 0; l < r; ++l) start.w.col(l) = dirichlet_ones(inst.kernel.cols(), start_rng);
    const NmfSolution s = nmf_refine(inst.kernel.matrix(), start, 500, 0.0);
    ASSERT_EQ(static_cast<int>(s.trace.size()), s.sweeps + 1);
    for (std::size_t k = 1; k < s.trace.size(); ++k) EXPECT_LE(s.trace[k], s.trace[k - 1] * (1.0 + 1e-12) + 1e-28);
    EXPECT_NEAR(s.objective, nmf_objective(inst.kernel.matrix(), s.u, s.w), 1e-15);
  }
}

TEST(Nmf, BestObjectiveNonIncreasingInRank) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5; ++t) {
    const Instance inst = generate_instance(rng);
    const auto path = nmf_rank_path(problem(inst.kernel, 1, 8, 1500), 1, inst.kernel.n(), 23);
    for (std::size_t k = 1; k < path.size(); ++k) {
      EXPECT_LE(path[k].objective, path[k - 1].objective * (1.0 + 1e-12) + 1e-28);
      EXPECT_EQ(path[k].u.cols(), path[k - 1].u.cols() + 1);
    }
  }
}

TEST(Nmf, ParallelMatchesSerial) {
  std::mt19937_64 rng(8);
  const Planted p = planted(8, 4, rng);
  const NmfProblem prob = problem(p.kernel(), 3, 16, 500);
  const NmfSolution a = nmf_factorize(prob, 29, Exec::serial);
  const NmfSolution b = nmf_factorize(prob, 29, Exec::parallel);
  EXPECT_EQ(a.start_index, b.start_index);
  EXPECT_TRUE(a.u == b.u);
  EXPECT_TRUE(a.w == b.w);
}

TEST(Residuals, ExactApproximationGivesZeros) {
  std::mt19937_64 rng(9);
  const Instance inst = generate_instance(rng);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(inst.kernel.n(), 1e-3);
  const ResidualReport rep = residual_report(inst.kernel.matrix(), inst.kernel, alpha);
  EXPECT_DOUBLE_EQ(rep.absolute.max, 0.0);
  EXPECT_DOUBLE_EQ(rep.relative.max, 0.0);
  EXPECT_DOUBLE_EQ(rep.ratios.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.out_of_interval, 0);
}

TEST(Residuals, RatioSignAndIntervalBoundary) {
  std::mt19937_64 rng(10);
  const Instance inst = generate_instance(rng);
  const int n = inst.kernel.n();
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(n, 1e-3);
  alpha[0] = 2e-3;
  Eigen::MatrixXd approx = inst.kernel.matrix();
  approx(0, 1) += 2.0 * alpha[0];
  ResidualReport rep = residual_report(approx, inst.kernel, alpha);
  EXPECT_NEAR(rep.ratios(0, 1), -2.0, 1e-9);
  EXPECT_TRUE(rep.in_interval(0, 1));
  EXPECT_EQ(rep.out_of_interval, 0);
  EXPECT_EQ(rep.worst_row, 0);
  EXPECT_EQ(rep.worst_col, 1);

  approx(0, 1) += alpha[0];
  rep = residual_report(approx, inst.kernel, alpha);
  EXPECT_NEAR(rep.ratios(0, 1), -3.0, 1e-9);
  EXPECT_FALSE(rep.in_interval(0, 1));
  EXPECT_EQ(rep.out_of_interval, 1);

  approx = inst.kernel.matrix();
  approx(n - 1, 0) -= 1.5 * alpha[n - 1];
  rep = residual_report(approx, inst.kernel, alpha);
  EXPECT_NEAR(rep.ratios(n - 1, 0), 1.5, 1e-9);
  EXPECT_FALSE(rep.in_interval(n - 1, 0));
}

TEST(Residuals, StatsOnKnownValues) {
  const DeviationStats st = deviation_stats({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(st.max, 4.0);
  EXPECT_DOUBLE_EQ(st.mean, 2.5);
  EXPECT_DOUBLE_EQ(st.median, 2.5);
  EXPECT_DOUBLE_EQ(st.p95, 4.0);
  std::vector<double> hundred(100);
  for (int k = 0; k < 100; ++k) hundred[k] = k + 1.0;
  EXPECT_DOUBLE_EQ(deviation_stats(hundred).p95, 95.0);
}

TEST(Residuals, RejectsNonPositiveAlpha) {
  std::mt19937_64 rng(11);
  const Instance inst = generate_instance(rng);
  EXPECT_THROW(residual_report(inst.kernel.matrix(), inst.kernel, Eigen::VectorXd::Zero(inst.kernel.n())),
               ValidationError);
}

TEST(Bootstrap, ZeroAlphaCollapsesToNominal) {
  std::mt19937_64 rng(12);
  const Planted p = planted(6, 3, rng);
  const auto sets = bootstrap_factor_sets(p.kernel(), Eigen::VectorXd::Zero(6), p.u, p.w, 20, 3);
  ASSERT_EQ(sets.size(), 3u);
  for (int l = 0; l < 3; ++l) {
    EXPECT_LT((sets[l].upper - sets[l].lower).maxCoeff(), 1e-9);
    EXPECT_TRUE(sets[l].contains(p.w.col(l)));
  }
}

TEST(Bootstrap, DeterministicForFixedSeed) {
  std::mt19937_64 rng(13);
  const Planted p = planted(6, 3, rng);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(6, 5e-3);
  const auto a = bootstrap_factor_sets(p.kernel(), alpha, p.u, p.w, 50, 4, Exec::serial);
  const auto b = bootstrap_factor_sets(p.kernel(), alpha, p.u, p.w, 50, 4, Exec::parallel);
  for (int l = 0; l < 3; ++l) {
    EXPECT_TRUE(a[l].lower == b[l].lower);
    EXPECT_TRUE(a[l].upper == b[l].upper);
  }
}

TEST(Bootstrap, HalfWidthsShrinkWithSquareRootOfSamples) {
  std::mt19937_64 rng(14);
  const Planted p = planted(6, 3, rng);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(6, 0.01);
  auto mean_width = [&](int q) {
    double total = 0.0;
    for (int rep = 0; rep < 8; ++rep) {
      for (const auto& s : bootstrap_factor_sets(p.kernel(), alpha, p.u, p.w, q, 100 + rep)) {
        total += (s.upper - s.lower).sum();
      }
    }
    return total;
  };
  const double ratio = mean_width(200) / mean_width(400);
  EXPECT_NEAR(ratio, std::sqrt(2.0), 0.1);
}

TEST(UMin, PublishedAlphaMinimum) {
  std::mt19937_64 rng(15);
  const Planted p = planted(10, 4, rng);
  NmfSolution s;
  s.u = p.u;
  s.w = p.w;
  const FactorModel f = build_u_min(s, kPublishedAlpha);
  EXPECT_DOUBLE_EQ(kPublishedAlpha.minCoeff(), 4e-4);
  for (int l = 0; l < 4; ++l) {
    EXPECT_TRUE(f.factor_sets()[l].contains(p.w.col(l)));
    for (int j = 0; j < 13; ++j) {
      EXPECT_NEAR(f.factor_sets()[l].upper[j], std::min(1.0, p.w(j, l) + 8e-4), 1e-15);
      EXPECT_NEAR(f.factor_sets()[l].lower[j], std::max(0.0, p.w(j, l) - 4e-4), 1e-15);
    }
  }
}

TEST(UMin, ZeroAlphaIsSingleton) {
  std::mt19937_64 rng(16);
  const Planted p = planted(5, 2, rng);
  NmfSolution s;
  s.u = p.u;
  s.w = p.w;
  const FactorModel f = build_u_min(s, Eigen::VectorXd::Zero(5));
  for (const auto& set : f.factor_sets()) EXPECT_DOUBLE_EQ((set.upper - set.lower).maxCoeff(), 0.0);
}
