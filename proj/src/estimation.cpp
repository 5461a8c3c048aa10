#include "icu/estimation.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <random>
#include <string>

#include "icu/errors.hpp"
#include "icu/nmf.hpp"

namespace icu {

namespace {

constexpr std::size_t kChunk = 4096;
constexpr int kRowDrawBudget = 100;

int chunk_count(std::size_t items) { return static_cast<int>((items + kChunk - 1) / kChunk); }

}  // namespace

TrajectorySet::TrajectorySet(int n) : n_(n), offsets_{0} {
  if (n < 1) throw ValidationError("trajectories: need at least one score");
}

std::span<const int> TrajectorySet::operator[](std::size_t k) const {
  return {states_.data() + offsets_[k], offsets_[k + 1] - offsets_[k]};
}

std::size_t TrajectorySet::transition_count() const { return states_.size() - size(); }

void TrajectorySet::add(std::span<const int> states) {
  if (states.empty()) throw ValidationError("trajectories: empty sequence");
  for (std::size_t t = 0; t < states.size(); ++t) {
    if (states[t] < 0 || states[t] >= n_ + 3) {
      throw ValidationError("trajectories: state " + std::to_string(states[t]) + " out of range");
    }
    if (states[t] >= n_ && t + 1 < states.size()) throw ValidationError("trajectories: transition out of a terminal");
  }
  states_.insert(states_.end(), states.begin(), states.end());
  offsets_.push_back(states_.size());
}

void TrajectorySet::append(const TrajectorySet& other) {
  if (other.n_ != n_) throw ValidationError("trajectories: score count mismatch");
  const std::size_t base = states_.size();
  states_.insert(states_.end(), other.states_.begin(), other.states_.end());
  for (std::size_t k = 1; k < other.offsets_.size(); ++k) offsets_.push_back(base + other.offsets_[k]);
}

ConfidenceSpec published_confidence() {
  ConfidenceSpec s;
  s.alpha = 1e-4 * (Eigen::VectorXd(10) << 4, 8, 10, 14, 15, 43, 46, 47, 46, 45).finished();
  return s;
}

Eigen::MatrixXd count_transitions(const TrajectorySet& data, Exec exec) {
  const int n = data.n();
  const int chunks = chunk_count(data.size());
  std::vector<Eigen::MatrixXd> partial(chunks);
  for_each_index(exec, chunks, [&](int c) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n + 3);
    const std::size_t end = std::min(data.size(), (static_cast<std::size_t>(c) + 1) * kChunk);
    for (std::size_t k = static_cast<std::size_t>(c) * kChunk; k < end; ++k) {
      const auto seq = data[k];
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) m(seq[t], seq[t + 1]) += 1.0;
    }
    partial[c] = std::move(m);
  });
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n + 3);
  for (const auto& m : partial) counts += m;
  return counts;
}

KernelEstimate estimate_kernel(const TrajectorySet& data, Exec exec) {
  if (data.empty()) throw ValidationError("estimate_kernel: no trajectories");
  Eigen::MatrixXd counts = count_transitions(data, exec);
  std::string missing;
  for (int i = 0; i < data.n(); ++i) {
    if (counts.row(i).sum() <= 0.0) missing += (missing.empty() ? "" : ", ") + state_label(data.n(), i);
  }
  if (!missing.empty()) throw ValidationError("estimate_kernel: no transitions observed from " + missing);
  Eigen::MatrixXd rows = counts;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) rows.row(i) /= rows.row(i).sum();
  return {TransitionKernel(std::move(rows)), std::move(counts)};
}

double goodman_quantile(int cells, double level) {
  if (cells < 1 || !(level > 0.0 && level < 1.0)) throw ValidationError("goodman: invalid cell count or level");
  const boost::math::chi_squared chi2(1.0);
  return boost::math::quantile(chi2, 1.0 - (1.0 - level) / cells);
}

CellInterval goodman_interval(double count, double total, double quantile) {
  const double a = quantile;
  const double root = std::sqrt(a * (a + 4.0 * count * (total - count) / total));
  const double denom = 2.0 * (total + a);
  return {std::max(0.0, (a + 2.0 * count - root) / denom), std::min(1.0, (a + 2.0 * count + root) / denom)};
}

ConfidenceSpec confidence_radii(const Eigen::MatrixXd& counts, double level) {
  if (counts.minCoeff() < 0.0) throw ValidationError("confidence_radii: negative counts");
  const auto cells = static_cast<int>(counts.cols());
  const double a = goodman_quantile(cells, level);
  ConfidenceSpec spec;
  spec.level = level;
  spec.alpha.resize(counts.rows());
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    const double total = counts.row(i).sum();
    if (total <= 0.0) throw ValidationError("confidence_radii: empty row " + std::to_string(i + 1));
    double alpha = 0.0;
    for (int j = 0; j < cells; ++j) {
      const double p = counts(i, j) / total;
      const CellInterval ci = goodman_interval(counts(i, j), total, a);
      alpha = std::max({alpha, p - ci.lower, 0.5 * (ci.upper - p)});
    }
    spec.alpha[i] = std::min(1.0, alpha);
  }
  return spec;
}

bool within_intervals(const TransitionKernel& sample, const TransitionKernel& kernel, const Eigen::VectorXd& alpha,
                      double tol) {
  if (sample.n() != kernel.n() || alpha.size() != kernel.n()) return false;
  for (int i = 0; i < kernel.n(); ++i) {
    for (int j = 0; j < kernel.cols(); ++j) {
      const double d = sample(i, j) - kernel(i, j);
      if (d < -alpha[i] - tol || d > 2.0 * alpha[i] + tol) return false;
    }
  }
  return true;
}

std::vector<TransitionKernel> sample_kernels_in_ci(const TransitionKernel& kernel, const ConfidenceSpec& spec, int count,
                                                   std::uint64_t seed, Exec exec) {
  const int n = kernel.n();
  const int cols = kernel.cols();
  if (count < 1) throw ValidationError("sample_kernels_in_ci: count must be positive");
  if (spec.alpha.size() != n || spec.alpha.minCoeff() < 0.0) {
    throw ValidationError("sample_kernels_in_ci: alpha must be nonnegative with one entry per score");
  }
  std::vector<Eigen::MatrixXd> rows(count);
  for_each_index(exec, count, [&](int k) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Eigen::MatrixXd m(n, cols);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd lo(cols);
      Eigen::VectorXd hi(cols);
      for (int j = 0; j < cols; ++j) {
        lo[j] = std::max(0.0, kernel(i, j) - spec.alpha[i]);
        hi[j] = std::min(1.0, kernel(i, j) + 2.0 * spec.alpha[i]);
      }
      bool accepted = false;
      for (int draw = 0; draw < kRowDrawBudget && !accepted; ++draw) {
        Eigen::VectorXd x(cols);
        for (int j = 0; j < cols; ++j) x[j] = lo[j] + (hi[j] - lo[j]) * u01(rng);
        x = project_simplex(x);
        accepted = ((x - lo).minCoeff() >= -1e-12) && ((hi - x).minCoeff() >= -1e-12);
        if (accepted) m.row(i) = x.transpose();
      }
      if (!accepted) {
        throw ConvergenceError("sample_kernels_in_ci: all " + std::to_string(kRowDrawBudget) + " draws for " +
                               state_label(n, i) + " left the interval box (rejection rate above 99%)");
      }
    }
    rows[k] = std::move(m);
  });
  std::vector<TransitionKernel> out;
  out.reserve(count);
  for (auto& m : rows) out.push_back(TransitionKernel::normalized(std::move(m)));
  return out;
}

TrajectorySet synth_trajectories(const TransitionKernel& kernel, const Eigen::VectorXd& start_dist, std::size_t count,
                                 std::uint64_t seed, Exec exec, int max_periods) {
  const int n = kernel.n();
  validate_distribution(start_dist, 1e-9, "synth_trajectories start distribution");
  if (start_dist.size() != n) throw ValidationError("synth_trajectories: start distribution length must be n");
  if (max_periods < 1) throw ValidationError("synth_trajectories: max_periods must be positive");
  const int chunks = chunk_count(count);
  std::vector<TrajectorySet> parts(chunks, TrajectorySet(n));
  for_each_index(exec, chunks, [&](int c) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    std::discrete_distribution<int> start(start_dist.data(), start_dist.data() + n);
    std::vector<std::discrete_distribution<int>> next;
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd row = kernel.matrix().row(i);
      next.emplace_back(row.data(), row.data() + row.size());
    }
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(count, begin + kChunk);
    std::vector<int> seq;
    for (std::size_t k = begin; k < end; ++k) {
      seq.clear();
      int s = start(rng);
      seq.push_back(s);
      for (int t = 0; t < max_periods && s < n; ++t) {
        s = next[s](rng);
        seq.push_back(s);
      }
      parts[c].add(seq);
    }
  });
  TrajectorySet out(n);
  for (const auto& p : parts) out.append(p);
  return out;
}

}  // namespace icu
