#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icu/hospital.hpp"
#include "icu/parallel.hpp"
#include "icu/policy.hpp"

namespace icu {

/// Kinds of entries in a simulation event log.
enum class SimEventKind {
  ward_arrival,
  direct_arrival,
  proactive_transfer,
  crash,
  readmission,
  icu_admit,
  icu_discharge,
  eviction,
  enqueue,
  queue_death,
  ward_death,
  ward_recovery,
  hospital_death,
  hospital_discharge,
};

std::string event_kind_name(SimEventKind k);

/**
 * One simulation event. `time` is in 6-hour periods.
 *
 * For `icu_admit` the value is the scheduled end of the ICU stay; for `eviction` it is the
 * share of the planned ICU stay already completed. For arrivals and transfers it is the score
 * (1-based), otherwise zero.
 */
struct SimEvent {
  double time = 0.0;
  long patient = 0;
  SimEventKind kind = SimEventKind::ward_arrival;
  double value = 0.0;
};

struct SimOptions {
  long horizon = 1460;
  long warmup = 120;
  int reps = 20;
  Exec exec = Exec::parallel;
  /// Keep the event log of each replication.
  bool record_log = false;
  void validate() const;
};

/**
 * Raw outcome of one replication.
 *
 * Rates and averages cover patients whose stay ends, or events that happen, in
 * [warmup, horizon]. Conservation counters cover the whole run.
 */
struct ReplicationResult {
  std::map<std::string, double> metrics;
  long arrivals = 0;
  long exits = 0;
  long in_system = 0;
  int max_icu_occupancy = 0;
  std::vector<SimEvent> log;
};

struct MetricEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  int reps = 0;
};

/**
 * Replication averages with standard errors.
 *
 * A metric that is undefined in some replication (for example a rate with no denominator) is
 * absent from `metrics`.
 */
struct SimMetrics {
  std::map<std::string, MetricEstimate> metrics;
  std::vector<ReplicationResult> replications;
  bool has(const std::string& name) const { return metrics.count(name) > 0; }
  /// Throws `ValidationError` when the metric is absent.
  const MetricEstimate& at(const std::string& name) const;
};

/**
 * Metric names produced by the simulator, in reporting order.
 *
 * mortality: deaths over completed hospital stays; ward_mortality: ward chains ending in D over
 * ward chains ended; mean_los_hours: arrival to hospital exit; icu_occupancy: time-averaged busy
 * beds over capacity; ddd_fraction: evictions over ICU admissions; proactive_rate and
 * crash_rate: ward chains ending in a transfer or a crash; queue_* are reported in both regimes.
 */
const std::vector<std::string>& metric_names();

/// One replication seeded with `seed`.
ReplicationResult simulate_replication(const HospitalScenario& scenario, const TransferPolicy& policy,
                                       const SimOptions& options, std::uint64_t seed);

/// `options.reps` replications, replication r seeded with `derive_seed(seed, r)`.
SimMetrics run_simulation(const HospitalScenario& scenario, const TransferPolicy& policy, const SimOptions& options,
                          std::uint64_t seed);

/// Kernels evaluated in a sweep; one kernel for all thresholds or one per threshold.
struct LabeledKernels {
  std::string label;
  std::vector<TransitionKernel> per_threshold;
  const TransitionKernel& for_index(std::size_t k) const;
};

struct SweepRow {
  int threshold = 0;
  std::string kernel_label;
  std::string metric;
  double value = 0.0;
  double stderr_ = 0.0;
};

/**
 * Simulates every threshold policy in `thresholds` under every kernel set.
 *
 * All runs share `seed`, so differences between rows are driven by the policy and kernel
 * rather than by sampling noise.
 */
std::vector<SweepRow> threshold_sweep(const HospitalScenario& scenario, const std::vector<LabeledKernels>& kernels,
                                      const std::vector<int>& thresholds, const SimOptions& options,
                                      std::uint64_t seed);

/// Writes sweep rows as CSV with header threshold,kernel_label,metric,value,stderr.
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct SensitivityRow {
  std::string metric;
  double nominal = 0.0;
  double mean_relative_deviation = 0.0;
  double max_relative_deviation = 0.0;
};

/// Relative deviation of each metric under `samples` from its value under the scenario kernel.
std::vector<SensitivityRow> sensitivity_sweep(const HospitalScenario& scenario, const TransferPolicy& policy,
                                              const std::vector<TransitionKernel>& samples, const SimOptions& options,
                                              std::uint64_t seed);

/**
 * ICU capacity giving roughly `target` occupancy under `policy`.
 *
 * Runs the scenario with effectively unlimited beds, measures the mean number of busy beds
 * and returns ceil(mean / target).
 */
int calibrate_capacity(const HospitalScenario& scenario, const TransferPolicy& policy, double target,
                       const SimOptions& options, std::uint64_t seed);

}  // namespace icu
