#include "icu/policy.hpp"

#include <cmath>
#include <string>

#include "icu/errors.hpp"

namespace icu {

TransferPolicy::TransferPolicy(Eigen::VectorXd p) : probs(std::move(p)) {
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0 || probs[i] > 1.0) {
      throw ValidationError("policy: probability at score " + std::to_string(i + 1) + " outside [0, 1]");
    }
  }
}

bool TransferPolicy::deterministic() const {
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] != 0.0 && probs[i] != 1.0) return false;
  }
  return true;
}

TransferPolicy TransferPolicy::threshold(int n, int tau) {
  if (n < 1 || tau < 1 || tau > n + 1) {
    throw ValidationError("policy: threshold " + std::to_string(tau) + " outside [1, " + std::to_string(n + 1) + "]");
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  for (int i = tau - 1; i < n; ++i) p[i] = 1.0;
  return TransferPolicy(std::move(p));
}

std::optional<int> is_threshold(const TransferPolicy& policy) {
  if (!policy.deterministic()) throw ValidationError("is_threshold: policy is randomized");
  const int n = policy.n();
  int tau = n + 1;
  for (int i = n - 1; i >= 0 && policy.probs[i] == 1.0; --i) tau = i + 1;
  for (int i = 0; i < tau - 1; ++i) {
    if (policy.probs[i] != 0.0) return std::nullopt;
  }
  return tau;
}

}  // namespace icu
