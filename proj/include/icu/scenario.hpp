#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "icu/estimation.hpp"
#include "icu/hospital.hpp"
#include "icu/kernel.hpp"
#include "icu/policy.hpp"
#include "icu/rewards.hpp"
#include "icu/simulator.hpp"
#include "icu/uncertainty.hpp"

namespace icu {

inline constexpr int kScenarioVersion = 1;

struct NmfSettings {
  int rank = 0;
  int starts = 1000;
  int iters = 2000;
  double tol = 1e-10;
};

enum class SetFamily { min, emp, sa };

std::string family_name(SetFamily f);
/// Parses "min", "emp" or "sa"; throws `ValidationError` otherwise.
SetFamily parse_family(const std::string& s);

struct UncertaintySettings {
  std::vector<SetFamily> families{SetFamily::min, SetFamily::emp, SetFamily::sa};
  /// Bootstrap kernels behind the empirical factor boxes.
  int emp_samples = 200;
  /// Replaces the factorization when present; serves as the minimal-information set.
  std::optional<FactorModel> factor_model;
};

struct HospitalSettings {
  double ward_load = 5.0;
  double direct_load = 0.25;
  /// Beds; calibrated to `target_occupancy` under the never-transfer policy when absent.
  std::optional<int> icu_capacity;
  double target_occupancy = 0.75;
  std::vector<DischargeRegime> regimes{DischargeRegime::demand_driven, DischargeRegime::waiting_queue};
  /// Scalar fields of the hospital scenario replaced by name.
  std::map<std::string, double> overrides;
};

struct SeedSettings {
  std::uint64_t nmf = 1;
  std::uint64_t bootstrap = 2;
  std::uint64_t simulation = 3;
  std::uint64_t sampling = 4;

  /// Every stage seed derived from one base seed.
  static SeedSettings from_base(std::uint64_t base);
};

/**
 * Versioned description of one experiment.
 *
 * JSON layout: version, name, kernel (rows), rewards (base reward spec with r_PT_RL etc., or
 * solver rewards with r_PT and r_CR), initial_distribution, policy (optional transfer
 * probabilities), confidence {alpha, level}, nmf {rank, starts, iters, tol}, uncertainty
 * {families, emp_samples, factor_model}, hospital {ward_load, direct_load, icu_capacity,
 * target_occupancy, regimes, overrides}, simulation {horizon, warmup, reps}, thresholds,
 * seeds {nmf, bootstrap, simulation, sampling}, sensitivity {samples}. Only version, kernel,
 * rewards and nmf.rank are required; unknown keys are rejected.
 */
struct ScenarioDocument {
  int version = kScenarioVersion;
  std::string name;
  TransitionKernel kernel;
  MdpRewards rewards;
  std::optional<RewardSpec> reward_spec;
  Eigen::VectorXd initial_distribution;
  std::optional<TransferPolicy> policy;
  ConfidenceSpec confidence;
  NmfSettings nmf;
  UncertaintySettings uncertainty;
  HospitalSettings hospital;
  SimOptions simulation;
  std::vector<int> thresholds;
  SeedSettings seeds;
  int sensitivity_samples = 20;

  int n() const { return kernel.n(); }
  /// Throws `ValidationError` naming the first inconsistent field.
  void validate() const;
  /// Hospital scenario for `kernel` with the document's loads, overrides and the given capacity.
  HospitalScenario hospital_scenario(const TransitionKernel& kernel, int capacity, DischargeRegime regime) const;
};

ScenarioDocument scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioDocument& doc);
ScenarioDocument load_scenario(const std::string& path);

}  // namespace icu
