#pragma once

#include <Eigen/Dense>
#include <string>

#include "icu/kernel.hpp"

namespace icu {

enum class DischargeRegime { demand_driven, waiting_queue };

std::string regime_name(DischargeRegime r);
DischargeRegime parse_regime(const std::string& s);

/// Lognormal length of stay given by its mean and standard deviation, in days.
struct LosSpec {
  double mean_days = 1.0;
  double sd_days = 1.0;
};

/// Beta distribution of the ICU share of a stay, moment-matched to `mean` with concentration `kappa`.
struct FractionSpec {
  double mean = 0.5;
  double kappa = 10.0;
};

/**
 * Full hospital model: ward severity chain, ICU with C beds, direct admits and readmissions.
 *
 * Rates are patients per 6-hour period. Arrival profiles have one column per 6-hour slot of
 * the day (4 columns); a single column means a homogeneous rate.
 */
struct HospitalScenario {
  int icu_capacity = 1;
  TransitionKernel kernel;
  /// n x slots ward arrival rates by score.
  Eigen::MatrixXd ward_arrival_rates;
  /// Direct ICU admission rates per slot.
  Eigen::VectorXd direct_arrival_rates;

  LosSpec crash_los{12.54, 10.13};
  LosSpec direct_los{5.49, 5.71};
  std::vector<LosSpec> proactive_los;
  FractionSpec ward_icu_fraction{0.4692, 10.0};
  FractionSpec direct_icu_fraction{0.5079, 10.0};

  double d_C = 0.5728;
  double d_E = 0.0941;
  Eigen::VectorXd d_A;

  double rho_C = 0.1688;
  double rho_E = 0.1576;
  double rho_D = 1.15 * 0.1576;

  DischargeRegime regime = DischargeRegime::demand_driven;
  double queue_death_prob = 0.0684;

  int n() const { return kernel.n(); }
  int slots() const { return static_cast<int>(ward_arrival_rates.cols()); }
  /// Ward arrival rate of score i in the slot containing period t.
  double ward_rate(int i, long period) const;
  double direct_rate(long period) const;
  /// Time-averaged arrival mix over scores.
  Eigen::VectorXd arrival_mix() const;

  /// Throws `ValidationError` on any out-of-range field.
  void validate() const;

  /**
   * Published parameter values for the ward, ICU and proactive stays.
   *
   * Ward arrivals are homogeneous with total `ward_load` per period split by the published
   * score proportions; direct admits arrive at `direct_load` per period. With n != 10 the
   * per-score tables are read at the nearest of the ten published scores.
   */
  static HospitalScenario defaults(const TransitionKernel& kernel, double ward_load = 5.0, double direct_load = 0.25,
                                   int icu_capacity = 20);
};

/// Published share of ward arrivals by score, in percent of the ten-score cohort.
Eigen::VectorXd published_score_mix();

struct WardOutcomes {
  double p_death = 0.0;
  double p_crash = 0.0;
  double p_recover = 0.0;
  double expected_periods = 0.0;
};

/// Absorption of the never-transfer ward chain; throws `InfeasibleError` when some score never exits.
WardOutcomes analytic_ward_outcomes(const TransitionKernel& kernel, const Eigen::VectorXd& start_dist);

}  // namespace icu
