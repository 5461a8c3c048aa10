#include "icu/kernel.hpp"

#include <cmath>
#include <sstream>

#include "icu/errors.hpp"

namespace icu {

TransitionKernel::TransitionKernel(Eigen::MatrixXd rows, double tol) : rows_(std::move(rows)) {
  const auto n = rows_.rows();
  if (n < 1) throw ValidationError("kernel: needs at least one severity score");
  if (rows_.cols() != n + 3) {
    std::ostringstream os;
    os << "kernel: expected " << n + 3 << " columns for n=" << n << ", got " << rows_.cols();
    throw ValidationError(os.str());
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
      const double x = rows_(i, j);
      if (!std::isfinite(x) || x < 0.0) {
        std::ostringstream os;
        os << "kernel: entry (" << i + 1 << ", " << j + 1 << ") = " << x << " is not a nonnegative number";
        throw ValidationError(os.str());
      }
    }
    const double s = rows_.row(i).sum();
    if (std::abs(s - 1.0) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "kernel: row " << i + 1 << " sums to " << s;
      throw ValidationError(os.str());
    }
  }
}

TransitionKernel TransitionKernel::normalized(Eigen::MatrixXd rows) {
  rows = rows.cwiseMax(0.0);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double s = rows.row(i).sum();
    if (s <= 0.0) throw ValidationError("kernel: row with zero mass cannot be normalized");
    rows.row(i) /= s;
  }
  return TransitionKernel(std::move(rows));
}

Eigen::VectorXd TransitionKernel::ward_mass() const { return rows_.leftCols(n()).rowwise().sum(); }

double TransitionKernel::exit_mass() const { return rows_.rightCols(3).minCoeff(); }

double TransitionKernel::min_total_exit() const { return rows_.rightCols(3).rowwise().sum().minCoeff(); }

std::string TransitionKernel::column_label(int j) const { return state_label(n(), j); }

std::string state_label(int n, int j) {
  if (j >= 0 && j < n) return "S" + std::to_string(j + 1);
  if (j == n + kCR) return "CR";
  if (j == n + kRL) return "RL";
  if (j == n + kD) return "D";
  if (j == n + 3) return "PT";
  throw ValidationError("state index out of range: " + std::to_string(j));
}

int parse_state_label(int n, const std::string& label) {
  if (label == "CR") return n + kCR;
  if (label == "RL") return n + kRL;
  if (label == "D") return n + kD;
  if (label.size() >= 2 && label[0] == 'S') {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(label.substr(1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == label.size() - 1 && k >= 1 && k <= n) return k - 1;
  }
  throw ValidationError("unknown state label '" + label + "'");
}

void validate_distribution(const Eigen::VectorXd& p, double tol, const std::string& what) {
  if (p.size() == 0) throw ValidationError(what + ": empty distribution");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0) throw ValidationError(what + ": negative or non-finite entry");
  }
  if (std::abs(p.sum() - 1.0) > tol) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": sums to " << p.sum();
    throw ValidationError(os.str());
  }
}

}  // namespace icu
