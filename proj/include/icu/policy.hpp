#pragma once

#include <Eigen/Dense>
#include <optional>

namespace icu {

/**
 * Per-score transfer probabilities.
 *
 * probs[i] is the probability of proactively transferring a patient in score i+1.
 * A threshold policy with threshold tau transfers exactly the scores >= tau,
 * so tau = n+1 transfers nobody and tau = 1 transfers everybody.
 */
struct TransferPolicy {
  Eigen::VectorXd probs;

  TransferPolicy() = default;
  explicit TransferPolicy(Eigen::VectorXd p);

  int n() const { return static_cast<int>(probs.size()); }
  bool deterministic() const;
  bool transfers(int i) const { return probs[i] >= 0.5; }

  /// Threshold policy for tau in [1, n+1].
  static TransferPolicy threshold(int n, int tau);

  bool operator==(const TransferPolicy& other) const { return probs == other.probs; }
};

/// Threshold tau when `policy` has monotone step form, nullopt otherwise; throws on randomized input.
std::optional<int> is_threshold(const TransferPolicy& policy);

}  // namespace icu
