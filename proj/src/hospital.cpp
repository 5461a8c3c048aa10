#include "icu/hospital.hpp"

#include <algorithm>
#include <cmath>

#include "icu/errors.hpp"

namespace icu {

namespace {

const double kScoreMix[10] = {17.6, 20.3, 20.0, 14.9, 16.9, 2.2, 2.0, 2.0, 2.0, 2.0};
const double kProactiveDeath[10] = {0.01, 0.02, 0.04, 0.05, 0.11, 0.18, 0.28, 0.39, 0.70, 6.84};
const double kProactiveLosMean[10] = {0.85, 0.91, 0.97, 1.04, 1.17, 1.36, 1.45, 1.57, 1.85, 3.77};
const double kProactiveLosSd[10] = {0.68, 0.74, 0.78, 0.84, 0.95, 1.10, 1.17, 1.27, 1.50, 3.04};

int published_index(int i, int n) {
  if (n == 10) return i;
  if (n == 1) return 0;
  return static_cast<int>(std::lround(9.0 * i / (n - 1)));
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("hospital scenario: ") + what + " must lie in [0, 1]");
}

void check_los(const LosSpec& l, const char* what) {
  if (!(l.mean_days > 0.0) || !(l.sd_days >= 0.0)) {
    throw ValidationError(std::string("hospital scenario: ") + what + " needs a positive mean and nonnegative sd");
  }
}

void check_fraction(const FractionSpec& f, const char* what) {
  if (!(f.mean > 0.0 && f.mean < 1.0) || !(f.kappa > 0.0)) {
    throw ValidationError(std::string("hospital scenario: ") + what + " needs a mean in (0, 1) and positive kappa");
  }
}

}  // namespace

std::string regime_name(DischargeRegime r) { return r == DischargeRegime::demand_driven ? "ddd" : "queue"; }

DischargeRegime parse_regime(const std::string& s) {
  if (s == "ddd") return DischargeRegime::demand_driven;
  if (s == "queue") return DischargeRegime::waiting_queue;
  throw ValidationError("unknown regime '" + s + "' (expected ddd or queue)");
}

Eigen::VectorXd published_score_mix() { return Eigen::Map<const Eigen::VectorXd>(kScoreMix, 10); }

double HospitalScenario::ward_rate(int i, long period) const {
  return ward_arrival_rates(i, static_cast<Eigen::Index>(period % slots()));
}

double HospitalScenario::direct_rate(long period) const {
  return direct_arrival_rates[static_cast<Eigen::Index>(period % direct_arrival_rates.size())];
}

Eigen::VectorXd HospitalScenario::arrival_mix() const {
  const Eigen::VectorXd total = ward_arrival_rates.rowwise().sum();
  const double s = total.sum();
  if (!(s > 0.0)) throw ValidationError("hospital scenario: no ward arrivals");
  return total / s;
}

void HospitalScenario::validate() const {
  const int n = this->n();
  if (n < 1) throw ValidationError("hospital scenario: missing kernel");
  if (icu_capacity < 1) throw ValidationError("hospital scenario: icu_capacity must be at least 1");
  if (ward_arrival_rates.rows() != n || ward_arrival_rates.cols() < 1) {
    throw ValidationError("hospital scenario: ward arrival rates must have one row per score");
  }
  if (direct_arrival_rates.size() < 1) throw ValidationError("hospital scenario: direct arrival rates are empty");
  if (!(ward_arrival_rates.allFinite() && ward_arrival_rates.minCoeff() >= 0.0) ||
      !(direct_arrival_rates.allFinite() && direct_arrival_rates.minCoeff() >= 0.0)) {
    throw ValidationError("hospital scenario: arrival rates must be finite and nonnegative");
  }
  if (static_cast<int>(proactive_los.size()) != n || d_A.size() != n) {
    throw ValidationError("hospital scenario: proactive tables must have one entry per score");
  }
  check_los(crash_los, "crash LOS");
  check_los(direct_los, "direct LOS");
  for (const auto& l : proactive_los) check_los(l, "proactive LOS");
  check_fraction(ward_icu_fraction, "ward ICU fraction");
  check_fraction(direct_icu_fraction, "direct ICU fraction");
  for (double p : {d_C, d_E, rho_C, rho_E, rho_D, queue_death_prob}) check_probability(p, "probability");
  for (int i = 0; i < n; ++i) {
    check_probability(d_A[i], "proactive death probability");
    if (d_A[i] > d_C) throw ValidationError("hospital scenario: proactive death probability exceeds crash death probability");
  }
}

HospitalScenario HospitalScenario::defaults(const TransitionKernel& kernel, double ward_load, double direct_load,
                                            int icu_capacity) {
  const int n = kernel.n();
  HospitalScenario s;
  s.kernel = kernel;
  s.icu_capacity = icu_capacity;
  Eigen::VectorXd mix(n);
  s.d_A.resize(n);
  for (int i = 0; i < n; ++i) {
    const int k = published_index(i, n);
    mix[i] = kScoreMix[k];
    s.d_A[i] = kProactiveDeath[k] / 100.0;
    s.proactive_los.push_back({kProactiveLosMean[k], kProactiveLosSd[k]});
  }
  s.ward_arrival_rates = ward_load * mix / mix.sum();
  s.direct_arrival_rates = Eigen::VectorXd::Constant(1, direct_load);
  s.validate();
  return s;
}

WardOutcomes analytic_ward_outcomes(const TransitionKernel& kernel, const Eigen::VectorXd& start_dist) {
  const int n = kernel.n();
  validate_distribution(start_dist, 1e-9, "analytic_ward_outcomes start distribution");
  if (start_dist.size() != n) throw ValidationError("analytic_ward_outcomes: start distribution length must be n");
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - kernel.ward_block();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) throw InfeasibleError("analytic_ward_outcomes: some score never leaves the ward");
  const Eigen::RowVectorXd visits = start_dist.transpose() * lu.inverse();
  const Eigen::RowVectorXd absorbed = visits * kernel.exit_block();
  return {absorbed[kD], absorbed[kCR], absorbed[kRL], visits.sum()};
}

}  // namespace icu
