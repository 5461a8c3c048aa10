#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "icu/errors.hpp"
#include "icu/generators.hpp"
#include "icu/hospital.hpp"
#include "icu/simulator.hpp"

using namespace icu;

namespace {

TransitionKernel two_score_kernel() {
  Eigen::MatrixXd rows(2, 5);
  rows << 0.5, 0.2, 0.1, 0.2, 0.0,
          0.1, 0.3, 0.2, 0.1, 0.3;
  return TransitionKernel(rows);
}

TransitionKernel generated_kernel(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratorOptions o;
  o.n_min = n;
  o.n_max = n;
  return generate_instance(rng, o).kernel;
}

HospitalScenario small_scenario(DischargeRegime regime, int capacity) {
  HospitalScenario s = HospitalScenario::defaults(generated_kernel(5, 11), 4.0, 0.5, capacity);
  s.regime = regime;
  return s;
}

SimOptions short_run(int reps = 4) {
  SimOptions o;
  o.horizon = 400;
  o.warmup = 40;
  o.reps = reps;
  return o;
}

int count_kind(const std::vector<SimEvent>& log, SimEventKind kind) {
  return static_cast<int>(std::count_if(log.begin(), log.end(), [&](const SimEvent& e) { return e.kind == kind; }));
}

}  // namespace

TEST(AnalyticWard, EverythingToDeathInOnePeriod) {
  const WardOutcomes w = analytic_ward_outcomes(absorbing_kernel(3, kD), Eigen::VectorXd::Constant(3, 1.0 / 3));
  EXPECT_NEAR(w.p_death, 1.0, 1e-15);
  EXPECT_NEAR(w.expected_periods, 1.0, 1e-15);
  EXPECT_NEAR(w.p_crash + w.p_recover, 0.0, 1e-15);
}

TEST(AnalyticWard, TwoScoreHandComputation) {
  const WardOutcomes w = analytic_ward_outcomes(two_score_kernel(), Eigen::Vector2d(1.0, 0.0));
  EXPECT_NEAR(w.p_death, 2.0 / 11.0, 1e-14);
  EXPECT_NEAR(w.p_crash, 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(w.p_recover, 16.0 / 33.0, 1e-14);
  EXPECT_NEAR(w.expected_periods, 30.0 / 11.0, 1e-14);
  const WardOutcomes w2 = analytic_ward_outcomes(two_score_kernel(), Eigen::Vector2d(0.0, 1.0));
  EXPECT_NEAR(w2.p_death, 5.0 / 11.0, 1e-14);
  EXPECT_NEAR(w2.expected_periods, 20.0 / 11.0, 1e-14);
}

TEST(AnalyticWard, ProbabilitiesSumToOne) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = generate_instance(rng);
    const WardOutcomes w = analytic_ward_outcomes(inst.kernel, inst.p0);
    EXPECT_NEAR(w.p_death + w.p_crash + w.p_recover, 1.0, 1e-12);
    EXPECT_GE(w.expected_periods, 1.0 - 1e-12);
  }
}

TEST(AnalyticWard, TrappedScoreIsInfeasible) {
  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(2, 5);
  rows(0, 3) = 1.0;
  rows(1, 1) = 1.0;
  EXPECT_THROW(analytic_ward_outcomes(TransitionKernel(rows), Eigen::Vector2d(0.5, 0.5)), InfeasibleError);
}

TEST(Scenario, DefaultsCarryPublishedValues) {
  const HospitalScenario s = HospitalScenario::defaults(generated_kernel(10, 2));
  EXPECT_DOUBLE_EQ(s.d_C, 0.5728);
  EXPECT_DOUBLE_EQ(s.d_E, 0.0941);
  EXPECT_DOUBLE_EQ(s.rho_C, 0.1688);
  EXPECT_DOUBLE_EQ(s.rho_E, 0.1576);
  EXPECT_NEAR(s.rho_D, 0.1813, 1e-4);
  EXPECT_DOUBLE_EQ(s.queue_death_prob, 0.0684);
  EXPECT_DOUBLE_EQ(s.crash_los.mean_days, 12.54);
  EXPECT_DOUBLE_EQ(s.direct_los.sd_days, 5.71);
  EXPECT_DOUBLE_EQ(s.ward_icu_fraction.mean, 0.4692);
  EXPECT_DOUBLE_EQ(s.direct_icu_fraction.mean, 0.5079);
  EXPECT_DOUBLE_EQ(s.d_A[9], 0.0684);
  EXPECT_DOUBLE_EQ(s.proactive_los[0].mean_days, 0.85);
  EXPECT_DOUBLE_EQ(s.proactive_los[9].sd_days, 3.04);
  EXPECT_NEAR(s.arrival_mix()[1], 20.3 / published_score_mix().sum(), 1e-12);
  EXPECT_NEAR(published_score_mix().sum(), 99.9, 1e-9);
}

TEST(Scenario, RejectsInvalidFields) {
  const HospitalScenario base = small_scenario(DischargeRegime::demand_driven, 5);
  HospitalScenario s = base;
  s.icu_capacity = 0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base;
  s.d_A[2] = s.d_C + 0.01;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base;
  s.rho_D = -0.1;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base;
  s.ward_arrival_rates(0, 0) = -1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base;
  s.ward_icu_fraction.mean = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = base;
  s.proactive_los.pop_back();
  EXPECT_THROW(s.validate(), ValidationError);
  EXPECT_THROW(parse_regime("fifo"), ValidationError);
  EXPECT_EQ(parse_regime(regime_name(DischargeRegime::waiting_queue)), DischargeRegime::waiting_queue);
}

TEST(Simulator, RejectsBadArguments) {
  const HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 5);
  EXPECT_THROW(run_simulation(s, TransferPolicy::threshold(4, 5), short_run(), 1), ValidationError);
  SimOptions o = short_run();
  o.horizon = 0;
  EXPECT_THROW(run_simulation(s, TransferPolicy::threshold(5, 6), o, 1), ValidationError);
  o = short_run();
  o.warmup = o.horizon;
  EXPECT_THROW(run_simulation(s, TransferPolicy::threshold(5, 6), o, 1), ValidationError);
}

TEST(Simulator, ZeroArrivalsLeaveRatesUndefined) {
  HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 5);
  s.ward_arrival_rates.setZero();
  s.direct_arrival_rates.setZero();
  const SimMetrics m = run_simulation(s, TransferPolicy::threshold(5, 1), short_run(), 3);
  EXPECT_FALSE(m.has("mortality"));
  EXPECT_FALSE(m.has("mean_los_hours"));
  EXPECT_FALSE(m.has("ddd_fraction"));
  EXPECT_DOUBLE_EQ(m.at("icu_occupancy").mean, 0.0);
  EXPECT_DOUBLE_EQ(m.at("queue_mean_length").mean, 0.0);
  for (const auto& rep : m.replications) EXPECT_EQ(rep.arrivals, 0);
}

TEST(Simulator, WardMortalityMatchesAbsorptionOracle) {
  HospitalScenario s = HospitalScenario::defaults(generated_kernel(10, 5), 5.0, 0.0, 1000000);
  SimOptions o;
  const SimMetrics m = run_simulation(s, TransferPolicy::threshold(10, 11), o, 99);
  const WardOutcomes w = analytic_ward_outcomes(s.kernel, s.arrival_mix());
  const MetricEstimate& e = m.at("ward_mortality");
  EXPECT_GT(e.stderr_, 0.0);
  EXPECT_LE(std::abs(e.mean - w.p_death), 3.0 * e.stderr_) << e.mean << " vs " << w.p_death;
  const MetricEstimate& c = m.at("crash_rate");
  EXPECT_LE(std::abs(c.mean - w.p_crash), 3.0 * c.stderr_) << c.mean << " vs " << w.p_crash;
}

TEST(Simulator, BedAndPatientConservation) {
  for (auto regime : {DischargeRegime::demand_driven, DischargeRegime::waiting_queue}) {
    for (int tau : {1, 3, 6}) {
      const HospitalScenario s = small_scenario(regime, 4);
      const SimMetrics m = run_simulation(s, TransferPolicy::threshold(5, tau), short_run(), 17);
      for (const auto& rep : m.replications) {
        EXPECT_LE(rep.max_icu_occupancy, s.icu_capacity);
        EXPECT_EQ(rep.arrivals, rep.exits + rep.in_system);
        EXPECT_GT(rep.exits, 0);
      }
    }
  }
}

TEST(Simulator, RegimesAreExclusive) {
  SimOptions o = short_run(3);
  o.record_log = true;
  const HospitalScenario ddd = small_scenario(DischargeRegime::demand_driven, 3);
  const SimMetrics a = run_simulation(ddd, TransferPolicy::threshold(5, 4), o, 5);
  EXPECT_GT(a.at("ddd_fraction").mean, 0.0);
  EXPECT_DOUBLE_EQ(a.at("queue_mean_length").mean, 0.0);
  EXPECT_DOUBLE_EQ(a.at("queue_entry_crash").mean, 0.0);
  for (const auto& rep : a.replications) EXPECT_EQ(count_kind(rep.log, SimEventKind::enqueue), 0);

  const HospitalScenario queue = small_scenario(DischargeRegime::waiting_queue, 3);
  const SimMetrics b = run_simulation(queue, TransferPolicy::threshold(5, 4), o, 5);
  EXPECT_DOUBLE_EQ(b.at("ddd_fraction").mean, 0.0);
  EXPECT_GT(b.at("queue_mean_length").mean, 0.0);
  for (const auto& rep : b.replications) EXPECT_EQ(count_kind(rep.log, SimEventKind::eviction), 0);
  EXPECT_DOUBLE_EQ(a.at("ddd_fraction").mean * a.at("queue_mean_length").mean, 0.0);
  EXPECT_DOUBLE_EQ(b.at("ddd_fraction").mean * b.at("queue_mean_length").mean, 0.0);
}

TEST(Simulator, SeedDeterminesTheEventLog) {
  SimOptions o = short_run(3);
  o.record_log = true;
  const HospitalScenario s = small_scenario(DischargeRegime::waiting_queue, 3);
  o.exec = Exec::serial;
  const SimMetrics a = run_simulation(s, TransferPolicy::threshold(5, 3), o, 21);
  o.exec = Exec::parallel;
  const SimMetrics b = run_simulation(s, TransferPolicy::threshold(5, 3), o, 21);
  ASSERT_EQ(a.replications.size(), b.replications.size());
  for (std::size_t r = 0; r < a.replications.size(); ++r) {
    const auto& la = a.replications[r].log;
    const auto& lb = b.replications[r].log;
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t k = 0; k < la.size(); ++k) {
      ASSERT_EQ(la[k].time, lb[k].time);
      ASSERT_EQ(la[k].patient, lb[k].patient);
      ASSERT_EQ(la[k].kind, lb[k].kind);
      ASSERT_EQ(la[k].value, lb[k].value);
      if (k > 0) ASSERT_LE(la[k - 1].time, la[k].time);
    }
  }
  for (const auto& [name, e] : a.metrics) {
    EXPECT_EQ(e.mean, b.at(name).mean) << name;
    EXPECT_EQ(e.stderr_, b.at(name).stderr_) << name;
  }
  const SimMetrics c = run_simulation(s, TransferPolicy::threshold(5, 3), o, 22);
  EXPECT_NE(a.at("mortality").mean, c.at("mortality").mean);
}

TEST(Simulator, EvictionTakesShortestRemainingStay) {
  SimOptions o = short_run(2);
  o.record_log = true;
  const HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 3);
  const SimMetrics m = run_simulation(s, TransferPolicy::threshold(5, 2), o, 8);
  int checked = 0;
  for (const auto& rep : m.replications) {
    std::map<long, double> icu_end;
    for (const SimEvent& e : rep.log) {
      if (e.kind == SimEventKind::icu_admit) {
        icu_end[e.patient] = e.value;
      } else if (e.kind == SimEventKind::icu_discharge) {
        icu_end.erase(e.patient);
      } else if (e.kind == SimEventKind::eviction) {
        ASSERT_EQ(static_cast<int>(icu_end.size()), s.icu_capacity);
        ASSERT_TRUE(icu_end.count(e.patient));
        for (const auto& [id, end] : icu_end) ASSERT_LE(icu_end[e.patient], end);
        EXPECT_GE(e.value, 0.0);
        EXPECT_LE(e.value, 1.0);
        icu_end.erase(e.patient);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 20);
  EXPECT_GE(m.at("eviction_completed_share").mean, 0.0);
}

TEST(Simulator, ProactiveTransfersNeverEvictOrQueue) {
  SimOptions o = short_run(2);
  o.record_log = true;
  for (auto regime : {DischargeRegime::demand_driven, DischargeRegime::waiting_queue}) {
    const HospitalScenario s = small_scenario(regime, 3);
    const SimMetrics m = run_simulation(s, TransferPolicy::threshold(5, 1), o, 4);
    for (const auto& rep : m.replications) {
      int occupied = 0;
      int transfers = 0;
      for (std::size_t k = 0; k < rep.log.size(); ++k) {
        const SimEvent& e = rep.log[k];
        if (e.kind == SimEventKind::proactive_transfer) {
          ++transfers;
          ASSERT_LT(occupied, s.icu_capacity);
          ASSERT_LT(k + 1, rep.log.size());
          ASSERT_EQ(rep.log[k + 1].kind, SimEventKind::icu_admit);
          ASSERT_EQ(rep.log[k + 1].patient, e.patient);
        }
        if (e.kind == SimEventKind::icu_admit) ++occupied;
        if (e.kind == SimEventKind::icu_discharge || e.kind == SimEventKind::eviction) --occupied;
      }
      EXPECT_GT(transfers, 0);
    }
  }
}

TEST(Simulator, TransferringEveryoneLowersMortalityWithAmpleBeds) {
  HospitalScenario s = HospitalScenario::defaults(generated_kernel(6, 9), 4.0, 0.2, 1000000);
  for (int i = 0; i < s.n(); ++i) {
    const WardOutcomes w = analytic_ward_outcomes(s.kernel, Eigen::VectorXd::Unit(s.n(), i));
    s.d_A[i] = std::min(s.d_A[i], w.p_death + w.p_crash * s.d_C);
  }
  const SimOptions o = short_run(6);
  const SimMetrics all = run_simulation(s, TransferPolicy::threshold(6, 1), o, 31);
  const SimMetrics none = run_simulation(s, TransferPolicy::threshold(6, 7), o, 31);
  EXPECT_LE(all.at("mortality").mean, none.at("mortality").mean);
  EXPECT_GT(all.at("proactive_rate").mean, 0.99);
  EXPECT_DOUBLE_EQ(none.at("proactive_rate").mean, 0.0);
}

TEST(Simulator, TimeVaryingArrivalsFollowTheDailyProfile) {
  HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 1000);
  const Eigen::VectorXd base = s.ward_arrival_rates.col(0);
  s.ward_arrival_rates = Eigen::MatrixXd::Zero(s.n(), 4);
  s.ward_arrival_rates.col(2) = 4.0 * base;
  s.direct_arrival_rates = Eigen::VectorXd::Zero(4);
  SimOptions o = short_run(1);
  o.record_log = true;
  const ReplicationResult r = simulate_replication(s, TransferPolicy::threshold(5, 6), o, 12);
  int arrivals = 0;
  for (const SimEvent& e : r.log) {
    if (e.kind != SimEventKind::ward_arrival) continue;
    ++arrivals;
    ASSERT_EQ(static_cast<long>(std::floor(e.time)) % 4, 2);
  }
  EXPECT_NEAR(arrivals, 4.0 * base.sum() * 100, 5.0 * std::sqrt(4.0 * base.sum() * 100));
}

TEST(Sweep, SingleCellMatchesRunSimulation) {
  const HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 4);
  const SimOptions o = short_run(3);
  const auto rows = threshold_sweep(s, {{"nominal", {s.kernel}}}, {3}, o, 40);
  const SimMetrics m = run_simulation(s, TransferPolicy::threshold(5, 3), o, 40);
  ASSERT_EQ(rows.size(), m.metrics.size());
  for (const auto& row : rows) {
    EXPECT_EQ(row.threshold, 3);
    EXPECT_EQ(row.kernel_label, "nominal");
    EXPECT_EQ(row.value, m.at(row.metric).mean);
    EXPECT_EQ(row.stderr_, m.at(row.metric).stderr_);
  }
  EXPECT_EQ(sweep_csv(rows), sweep_csv(threshold_sweep(s, {{"nominal", {s.kernel}}}, {3}, o, 40)));
  EXPECT_EQ(sweep_csv(rows).rfind("threshold,kernel_label,metric,value,stderr\n", 0), 0u);
}

TEST(Sweep, PerThresholdKernelsNeedMatchingCount) {
  const HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 4);
  EXPECT_THROW(threshold_sweep(s, {{"bad", {s.kernel, s.kernel}}}, {1, 2, 3}, short_run(1), 1), ValidationError);
}

TEST(Sensitivity, NominalSamplesGiveZeroDeviation) {
  const HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 4);
  const auto rows = sensitivity_sweep(s, TransferPolicy::threshold(5, 3), {s.kernel, s.kernel}, short_run(2), 6);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    EXPECT_EQ(r.mean_relative_deviation, 0.0) << r.metric;
    EXPECT_EQ(r.max_relative_deviation, 0.0) << r.metric;
  }
}

TEST(Calibration, CapacityHitsTargetOccupancy) {
  HospitalScenario s = small_scenario(DischargeRegime::demand_driven, 1);
  const SimOptions o = short_run(4);
  const TransferPolicy none = TransferPolicy::threshold(5, 6);
  s.icu_capacity = calibrate_capacity(s, none, 0.7, o, 2);
  EXPECT_GT(s.icu_capacity, 1);
  const double occ = run_simulation(s, none, o, 2).at("icu_occupancy").mean;
  EXPECT_GT(occ, 0.55);
  EXPECT_LE(occ, 0.75);
  EXPECT_THROW(calibrate_capacity(s, none, 0.0, o, 2), ValidationError);
}
