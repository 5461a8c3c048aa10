#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "icu/mdp.hpp"
#include "icu/nmf.hpp"
#include "icu/parallel.hpp"
#include "icu/scenario.hpp"
#include "icu/simulator.hpp"
#include "icu/uncertainty.hpp"

namespace icu {

struct PipelineOptions {
  /// Parent of the run directories; each run gets a fresh run-NNNN below it.
  std::string out_root = "runs";
  /// Replaces every stage seed with one derived from this base seed.
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  /// Restricts the simulated regimes; the scenario's list otherwise.
  std::optional<DischargeRegime> regime;
  /// Restricts the uncertainty families; the scenario's list otherwise.
  std::optional<std::vector<SetFamily>> families;
  /// Directory of cached factorizations keyed by their inputs; empty disables the cache.
  std::string nmf_cache_dir;
  Exec exec = Exec::parallel;
};

struct PolicySummary {
  TransferPolicy policy;
  /// Threshold, or -1 when the policy is not of threshold form.
  int threshold = -1;
  ValueVector value;
  double value_at_p0 = 0.0;
};

struct FamilyResult {
  SetFamily family = SetFamily::min;
  UncertaintySet set;
  Assumption3Report check;
  /// Robust solve ran although the structural conditions fail over the set.
  bool waived = false;
  PolicySummary robust;
  /// Worst-case kernel of each threshold policy, in the order of the scenario thresholds.
  std::vector<WorstCase> worst;
  /// Entries of each worst-case kernel outside the confidence intervals of the nominal kernel.
  std::vector<int> out_of_interval;
};

struct PipelineResult {
  std::string run_dir;
  /// Scenario after option overrides, as written to the bundle.
  ScenarioDocument scenario;
  PolicySummary nominal;
  NmfSolution nmf;
  bool nmf_cached = false;
  std::vector<FamilyResult> families;
  int icu_capacity = 0;
  std::map<std::string, std::vector<SweepRow>> sweeps;
  std::map<std::string, std::vector<SensitivityRow>> sensitivity;
  nlohmann::json manifest;
};

/**
 * Runs the full experiment and writes its bundle to a new run directory.
 *
 * Stages run in order: nominal solve, factorization, uncertainty sets, robust solves, worst-case
 * kernels, capacity, sweeps, sensitivity, bundle. A failure is rethrown with the same error class
 * and a message prefixed by the stage name in brackets.
 */
PipelineResult run_pipeline(ScenarioDocument scenario, const PipelineOptions& options);

/// Creates and returns `root`/run-NNNN with the smallest unused NNNN.
std::string create_run_dir(const std::string& root);

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Optimal policy and value of one kernel.
PolicySummary solve_nominal(const TransitionKernel& kernel, const MdpRewards& rewards, const Eigen::VectorXd& p0);

}  // namespace icu
