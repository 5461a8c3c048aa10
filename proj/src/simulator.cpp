#include "icu/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "icu/errors.hpp"

namespace icu {

namespace {

constexpr double kPeriodsPerDay = 4.0;
constexpr double kHoursPerPeriod = 6.0;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

/// splitmix64 stream; each patient owns one so its draws do not depend on other patients.
class SplitMix {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

enum class Where { ward, icu, post_icu, queue, gone };
enum class Origin { ward_chain, crash, direct, proactive };
enum class Request { crash, direct, readmit };

struct Patient {
  SplitMix rng;
  double arrival = 0.0;
  Where where = Where::ward;
  Origin origin = Origin::ward_chain;
  int score = 0;
  int version = 0;
  double icu_start = 0.0;
  double icu_end = 0.0;
  double los_end = 0.0;
  double wait_start = 0.0;
  Request waiting_for = Request::direct;
};

enum class EvType { icu_end, readmit, los_end, ward_arrival, direct_arrival };

struct Ev {
  double time;
  std::uint64_t seq;
  EvType type;
  long patient;
  int version;
  bool operator>(const Ev& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

double uniform01(SplitMix& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

double draw_los_periods(const LosSpec& l, SplitMix& rng) {
  if (l.sd_days <= 0.0) return l.mean_days * kPeriodsPerDay;
  const double s2 = std::log1p((l.sd_days * l.sd_days) / (l.mean_days * l.mean_days));
  std::lognormal_distribution<double> d(std::log(l.mean_days) - 0.5 * s2, std::sqrt(s2));
  return d(rng) * kPeriodsPerDay;
}

double draw_fraction(const FractionSpec& f, SplitMix& rng) {
  const double x = std::gamma_distribution<double>(f.mean * f.kappa, 1.0)(rng);
  const double y = std::gamma_distribution<double>((1.0 - f.mean) * f.kappa, 1.0)(rng);
  return x + y > 0.0 ? x / (x + y) : f.mean;
}

double ratio(double num, double den) { return den > 0.0 ? num / den : kNaN; }

class Simulation {
 public:
  Simulation(const HospitalScenario& s, const TransferPolicy& policy, const SimOptions& o, std::uint64_t seed)
      : s_(s), policy_(policy), o_(o), seed_(seed), arrivals_rng_(derive_seed(seed, 0)) {
    const int n = s_.n();
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd row = s_.kernel.matrix().row(i);
      next_.emplace_back(row.data(), row.data() + row.size());
    }
  }

  ReplicationResult run() {
    for (long k = 0; k < o_.horizon; ++k) {
      advance_to(static_cast<double>(k));
      boundary();
      schedule_arrivals(k);
      drain_until(static_cast<double>(k + 1));
    }
    advance_to(static_cast<double>(o_.horizon));
    return finish();
  }

 private:
  const HospitalScenario& s_;
  const TransferPolicy& policy_;
  const SimOptions& o_;
  std::uint64_t seed_;
  std::mt19937_64 arrivals_rng_;
  std::vector<std::discrete_distribution<int>> next_;
  std::vector<Patient> patients_;
  std::vector<long> ward_;
  std::set<std::pair<double, long>> icu_;
  std::deque<long> queue_;
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  double clock_ = 0.0;
  ReplicationResult out_;

  double occupancy_area_ = 0.0;
  double queue_area_ = 0.0;
  long completed_ = 0;
  long deaths_ = 0;
  double los_sum_ = 0.0;
  long ward_ended_ = 0;
  long ward_deaths_ = 0;
  long proactive_ = 0;
  long crashes_ = 0;
  long admissions_ = 0;
  long evictions_ = 0;
  double evicted_share_sum_ = 0.0;
  long icu_stays_ = 0;
  double icu_stay_sum_ = 0.0;
  long requests_[3] = {0, 0, 0};
  long entries_[3] = {0, 0, 0};
  long queue_left_ = 0;
  double wait_sum_ = 0.0;
  long queue_deaths_ = 0;

  bool counted(double t) const { return t >= static_cast<double>(o_.warmup); }

  void log(long p, SimEventKind kind, double value = 0.0) {
    if (o_.record_log) out_.log.push_back({clock_, p, kind, value});
  }

  void push(double time, EvType type, long p) {
    events_.push({time, seq_++, type, p, p >= 0 ? patients_[p].version : 0});
  }

  void advance_to(double t) {
    const double lo = std::max(clock_, static_cast<double>(o_.warmup));
    const double hi = std::min(t, static_cast<double>(o_.horizon));
    if (hi > lo) {
      occupancy_area_ += static_cast<double>(icu_.size()) * (hi - lo);
      queue_area_ += static_cast<double>(queue_.size()) * (hi - lo);
    }
    clock_ = t;
  }

  long new_patient(double t, Origin origin, int score) {
    const long id = static_cast<long>(patients_.size());
    Patient p{SplitMix(derive_seed(seed_, static_cast<std::uint64_t>(id) + 1))};
    p.arrival = t;
    p.origin = origin;
    p.score = score;
    patients_.push_back(p);
    ++out_.arrivals;
    return id;
  }

  void exit_hospital(long id, bool died) {
    Patient& p = patients_[id];
    p.where = Where::gone;
    ++p.version;
    ++out_.exits;
    log(id, died ? SimEventKind::hospital_death : SimEventKind::hospital_discharge);
    if (counted(clock_)) {
      ++completed_;
      deaths_ += died ? 1 : 0;
      los_sum_ += clock_ - p.arrival;
    }
  }

  double death_prob(const Patient& p) const {
    switch (p.origin) {
      case Origin::crash:
        return s_.d_C;
      case Origin::direct:
        return s_.d_E;
      case Origin::proactive:
        return s_.d_A[p.score];
      case Origin::ward_chain:
        break;
    }
    return 0.0;
  }

  double readmit_prob(const Patient& p) const { return p.origin == Origin::direct ? s_.rho_E : s_.rho_C; }

  void admit(long id) {
    Patient& p = patients_[id];
    const LosSpec& los = p.origin == Origin::crash    ? s_.crash_los
                         : p.origin == Origin::direct ? s_.direct_los
                                                      : s_.proactive_los[p.score];
    const FractionSpec& frac = p.origin == Origin::direct ? s_.direct_icu_fraction : s_.ward_icu_fraction;
    const double stay = draw_los_periods(los, p.rng);
    const double share = draw_fraction(frac, p.rng);
    ++p.version;
    p.where = Where::icu;
    p.icu_start = clock_;
    p.icu_end = clock_ + share * stay;
    p.los_end = clock_ + stay;
    icu_.insert({p.icu_end, id});
    out_.max_icu_occupancy = std::max(out_.max_icu_occupancy, static_cast<int>(icu_.size()));
    if (static_cast<int>(icu_.size()) > s_.icu_capacity) throw std::logic_error("simulator: ICU over capacity");
    if (counted(clock_)) ++admissions_;
    log(id, SimEventKind::icu_admit, p.icu_end);
    push(p.icu_end, EvType::icu_end, id);
  }

  /// Moves an ICU patient to the post-ICU ward and schedules readmission or the end of the stay.
  void leave_icu(long id, double readmit_p) {
    Patient& p = patients_[id];
    icu_.erase({p.icu_end, id});
    if (counted(clock_)) {
      ++icu_stays_;
      icu_stay_sum_ += clock_ - p.icu_start;
    }
    ++p.version;
    p.where = Where::post_icu;
    const double remaining = std::max(0.0, p.los_end - clock_);
    if (uniform01(p.rng) < readmit_p) {
      push(clock_ + remaining * uniform01(p.rng), EvType::readmit, id);
    } else {
      push(clock_ + remaining, EvType::los_end, id);
    }
  }

  void request_icu(long id, Request why) {
    const auto r = static_cast<int>(why);
    if (counted(clock_)) ++requests_[r];
    if (static_cast<int>(icu_.size()) < s_.icu_capacity) {
      admit(id);
      return;
    }
    if (s_.regime == DischargeRegime::demand_driven) {
      const long victim = icu_.begin()->second;
      const Patient& v = patients_[victim];
      const double planned = v.icu_end - v.icu_start;
      const double share = planned > 0.0 ? (clock_ - v.icu_start) / planned : 1.0;
      if (counted(clock_)) {
        ++evictions_;
        evicted_share_sum_ += share;
      }
      log(victim, SimEventKind::eviction, share);
      leave_icu(victim, s_.rho_D);
      admit(id);
      return;
    }
    Patient& p = patients_[id];
    ++p.version;
    p.where = Where::queue;
    p.wait_start = clock_;
    p.waiting_for = why;
    queue_.push_back(id);
    if (counted(clock_)) ++entries_[r];
    log(id, SimEventKind::enqueue, static_cast<double>(r));
  }

  void leave_queue(long id) {
    if (counted(clock_)) {
      ++queue_left_;
      wait_sum_ += clock_ - patients_[id].wait_start;
    }
  }

  void fill_from_queue() {
    while (!queue_.empty() && static_cast<int>(icu_.size()) < s_.icu_capacity) {
      const long id = queue_.front();
      queue_.pop_front();
      leave_queue(id);
      admit(id);
    }
  }

  void boundary() {
    if (s_.regime == DischargeRegime::waiting_queue && !queue_.empty()) {
      std::deque<long> alive;
      for (long id : queue_) {
        if (uniform01(patients_[id].rng) < s_.queue_death_prob) {
          leave_queue(id);
          if (counted(clock_)) ++queue_deaths_;
          log(id, SimEventKind::queue_death);
          exit_hospital(id, true);
        } else {
          alive.push_back(id);
        }
      }
      queue_.swap(alive);
    }

    std::vector<long> order = ward_;
    std::sort(order.begin(), order.end(), [&](long a, long b) {
      const int sa = patients_[a].score;
      const int sb = patients_[b].score;
      return sa != sb ? sa > sb : a < b;
    });
    std::vector<char> moved(patients_.size(), 0);
    for (long id : order) {
      Patient& p = patients_[id];
      const double prob = policy_.probs[p.score];
      const bool wants = prob >= 1.0 || (prob > 0.0 && uniform01(p.rng) < prob);
      if (!wants || static_cast<int>(icu_.size()) >= s_.icu_capacity) continue;
      moved[id] = 1;
      end_ward_chain(id);
      if (counted(clock_)) ++proactive_;
      log(id, SimEventKind::proactive_transfer, p.score + 1);
      p.origin = Origin::proactive;
      admit(id);
    }

    const int n = s_.n();
    std::vector<long> still;
    still.reserve(ward_.size());
    for (long id : ward_) {
      if (moved[id]) continue;
      Patient& p = patients_[id];
      const int next = next_[p.score](p.rng);
      if (next < n) {
        p.score = next;
        still.push_back(id);
        continue;
      }
      end_ward_chain(id);
      if (next == n + kCR) {
        if (counted(clock_)) ++crashes_;
        log(id, SimEventKind::crash, p.score + 1);
        p.origin = Origin::crash;
        request_icu(id, Request::crash);
      } else if (next == n + kRL) {
        log(id, SimEventKind::ward_recovery);
        exit_hospital(id, false);
      } else {
        if (counted(clock_)) ++ward_deaths_;
        log(id, SimEventKind::ward_death);
        exit_hospital(id, true);
      }
    }
    ward_ = std::move(still);
  }

  void end_ward_chain(long id) {
    if (counted(clock_)) ++ward_ended_;
    patients_[id].where = Where::gone;
  }

  void schedule_arrivals(long k) {
    std::uniform_real_distribution<double> within(0.0, 1.0);
    for (int i = 0; i < s_.n(); ++i) {
      const double rate = s_.ward_rate(i, k);
      if (rate <= 0.0) continue;
      const int count = std::poisson_distribution<int>(rate)(arrivals_rng_);
      for (int c = 0; c < count; ++c) {
        events_.push({static_cast<double>(k) + within(arrivals_rng_), seq_++, EvType::ward_arrival, i, 0});
      }
    }
    const double rate = s_.direct_rate(k);
    if (rate > 0.0) {
      const int count = std::poisson_distribution<int>(rate)(arrivals_rng_);
      for (int c = 0; c < count; ++c) {
        events_.push({static_cast<double>(k) + within(arrivals_rng_), seq_++, EvType::direct_arrival, 0, 0});
      }
    }
  }

  void drain_until(double t) {
    while (!events_.empty() && events_.top().time < t) {
      const Ev e = events_.top();
      events_.pop();
      advance_to(e.time);
      handle(e);
    }
  }

  void handle(const Ev& e) {
    switch (e.type) {
      case EvType::ward_arrival: {
        const long id = new_patient(clock_, Origin::ward_chain, static_cast<int>(e.patient));
        ward_.push_back(id);
        log(id, SimEventKind::ward_arrival, static_cast<double>(e.patient + 1));
        return;
      }
      case EvType::direct_arrival: {
        const long id = new_patient(clock_, Origin::direct, 0);
        log(id, SimEventKind::direct_arrival);
        request_icu(id, Request::direct);
        return;
      }
      default:
        break;
    }
    Patient& p = patients_[e.patient];
    if (e.version != p.version) return;
    switch (e.type) {
      case EvType::icu_end:
        log(e.patient, SimEventKind::icu_discharge);
        leave_icu(e.patient, readmit_prob(p));
        fill_from_queue();
        return;
      case EvType::readmit:
        log(e.patient, SimEventKind::readmission);
        request_icu(e.patient, Request::readmit);
        return;
      case EvType::los_end:
        exit_hospital(e.patient, uniform01(p.rng) < death_prob(p));
        return;
      default:
        return;
    }
  }

  ReplicationResult finish() {
    for (const Patient& p : patients_) out_.in_system += p.where != Where::gone ? 1 : 0;
    const double span = static_cast<double>(o_.horizon - o_.warmup);
    auto& m = out_.metrics;
    m["mortality"] = ratio(static_cast<double>(deaths_), static_cast<double>(completed_));
    m["ward_mortality"] = ratio(static_cast<double>(ward_deaths_), static_cast<double>(ward_ended_));
    m["mean_los_hours"] = ratio(los_sum_ * kHoursPerPeriod, static_cast<double>(completed_));
    m["icu_occupancy"] = occupancy_area_ / (span * s_.icu_capacity);
    m["ddd_fraction"] = ratio(static_cast<double>(evictions_), static_cast<double>(admissions_));
    m["eviction_completed_share"] = ratio(evicted_share_sum_, static_cast<double>(evictions_));
    m["proactive_rate"] = ratio(static_cast<double>(proactive_), static_cast<double>(ward_ended_));
    m["crash_rate"] = ratio(static_cast<double>(crashes_), static_cast<double>(ward_ended_));
    m["icu_admissions_per_day"] = static_cast<double>(admissions_) / span * kPeriodsPerDay;
    m["mean_icu_stay_hours"] = ratio(icu_stay_sum_ * kHoursPerPeriod, static_cast<double>(icu_stays_));
    m["queue_mean_length"] = queue_area_ / span;
    m["queue_mean_wait_hours"] = ratio(wait_sum_ * kHoursPerPeriod, static_cast<double>(queue_left_));
    m["queue_death_rate"] = ratio(static_cast<double>(queue_deaths_), static_cast<double>(queue_left_));
    m["queue_entry_crash"] = ratio(static_cast<double>(entries_[0]), static_cast<double>(requests_[0]));
    m["queue_entry_direct"] = ratio(static_cast<double>(entries_[1]), static_cast<double>(requests_[1]));
    m["queue_entry_readmit"] = ratio(static_cast<double>(entries_[2]), static_cast<double>(requests_[2]));
    return std::move(out_);
  }
};

}  // namespace

std::string event_kind_name(SimEventKind k) {
  switch (k) {
    case SimEventKind::ward_arrival:
      return "ward_arrival";
    case SimEventKind::direct_arrival:
      return "direct_arrival";
    case SimEventKind::proactive_transfer:
      return "proactive_transfer";
    case SimEventKind::crash:
      return "crash";
    case SimEventKind::readmission:
      return "readmission";
    case SimEventKind::icu_admit:
      return "icu_admit";
    case SimEventKind::icu_discharge:
      return "icu_discharge";
    case SimEventKind::eviction:
      return "eviction";
    case SimEventKind::enqueue:
      return "enqueue";
    case SimEventKind::queue_death:
      return "queue_death";
    case SimEventKind::ward_death:
      return "ward_death";
    case SimEventKind::ward_recovery:
      return "ward_recovery";
    case SimEventKind::hospital_death:
      return "hospital_death";
    case SimEventKind::hospital_discharge:
      return "hospital_discharge";
  }
  return "unknown";
}

void SimOptions::validate() const {
  if (horizon < 1 || warmup < 0 || warmup >= horizon) {
    throw ValidationError("simulation: need 0 <= warmup < horizon");
  }
  if (reps < 1) throw ValidationError("simulation: reps must be at least 1");
}

const MetricEstimate& SimMetrics::at(const std::string& name) const {
  const auto it = metrics.find(name);
  if (it == metrics.end()) throw ValidationError("simulation metric '" + name + "' is undefined");
  return it->second;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{
      "mortality",          "ward_mortality",         "mean_los_hours",        "icu_occupancy",
      "ddd_fraction",       "eviction_completed_share", "proactive_rate",      "crash_rate",
      "icu_admissions_per_day", "mean_icu_stay_hours", "queue_mean_length",    "queue_mean_wait_hours",
      "queue_death_rate",   "queue_entry_crash",      "queue_entry_direct",    "queue_entry_readmit"};
  return names;
}

ReplicationResult simulate_replication(const HospitalScenario& scenario, const TransferPolicy& policy,
                                       const SimOptions& options, std::uint64_t seed) {
  scenario.validate();
  options.validate();
  if (policy.n() != scenario.n()) throw ValidationError("simulation: policy length must equal the score count");
  return Simulation(scenario, policy, options, seed).run();
}

SimMetrics run_simulation(const HospitalScenario& scenario, const TransferPolicy& policy, const SimOptions& options,
                          std::uint64_t seed) {
  scenario.validate();
  options.validate();
  if (policy.n() != scenario.n()) throw ValidationError("simulation: policy length must equal the score count");
  SimMetrics out;
  out.replications.resize(options.reps);
  for_each_index(options.exec, options.reps, [&](int r) {
    out.replications[r] =
        Simulation(scenario, policy, options, derive_seed(seed, static_cast<std::uint64_t>(r))).run();
  });
  for (const auto& name : metric_names()) {
    double sum = 0.0;
    double sq = 0.0;
    bool defined = true;
    for (const auto& rep : out.replications) {
      const double v = rep.metrics.at(name);
      if (std::isnan(v)) {
        defined = false;
        break;
      }
      sum += v;
    }
    if (!defined) continue;
    const double mean = sum / options.reps;
    for (const auto& rep : out.replications) sq += (rep.metrics.at(name) - mean) * (rep.metrics.at(name) - mean);
    const double se = options.reps > 1 ? std::sqrt(sq / (options.reps - 1) / options.reps) : 0.0;
    out.metrics[name] = {mean, se, options.reps};
  }
  return out;
}

const TransitionKernel& LabeledKernels::for_index(std::size_t k) const {
  if (per_threshold.empty()) throw ValidationError("sweep: kernel set '" + label + "' is empty");
  return per_threshold.size() == 1 ? per_threshold.front() : per_threshold.at(k);
}

std::vector<SweepRow> threshold_sweep(const HospitalScenario& scenario, const std::vector<LabeledKernels>& kernels,
                                      const std::vector<int>& thresholds, const SimOptions& options,
                                      std::uint64_t seed) {
  for (const auto& set : kernels) {
    if (set.per_threshold.size() != 1 && set.per_threshold.size() != thresholds.size()) {
      throw ValidationError("sweep: kernel set '" + set.label + "' needs one kernel or one per threshold");
    }
  }
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    for (const auto& set : kernels) {
      HospitalScenario s = scenario;
      s.kernel = set.for_index(k);
      const SimMetrics m = run_simulation(s, TransferPolicy::threshold(s.n(), thresholds[k]), options, seed);
      for (const auto& name : metric_names()) {
        if (!m.has(name)) continue;
        const MetricEstimate& e = m.at(name);
        rows.push_back({thresholds[k], set.label, name, e.mean, e.stderr_});
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "threshold,kernel_label,metric,value,stderr\n";
  for (const auto& r : rows) {
    os << r.threshold << ',' << r.kernel_label << ',' << r.metric << ',' << r.value << ',' << r.stderr_ << '\n';
  }
  return os.str();
}

std::vector<SensitivityRow> sensitivity_sweep(const HospitalScenario& scenario, const TransferPolicy& policy,
                                              const std::vector<TransitionKernel>& samples, const SimOptions& options,
                                              std::uint64_t seed) {
  if (samples.empty()) throw ValidationError("sensitivity_sweep: no kernel samples");
  const SimMetrics nominal = run_simulation(scenario, policy, options, seed);
  std::vector<SimMetrics> runs;
  runs.reserve(samples.size());
  for (const auto& k : samples) {
    HospitalScenario s = scenario;
    s.kernel = k;
    runs.push_back(run_simulation(s, policy, options, seed));
  }
  std::vector<SensitivityRow> out;
  for (const auto& name : metric_names()) {
    if (!nominal.has(name)) continue;
    const double base = nominal.at(name).mean;
    if (base == 0.0) continue;
    SensitivityRow row{name, base, 0.0, 0.0};
    int used = 0;
    for (const auto& r : runs) {
      if (!r.has(name)) continue;
      const double dev = std::abs(r.at(name).mean - base) / std::abs(base);
      row.mean_relative_deviation += dev;
      row.max_relative_deviation = std::max(row.max_relative_deviation, dev);
      ++used;
    }
    if (used == 0) continue;
    row.mean_relative_deviation /= used;
    out.push_back(row);
  }
  return out;
}

int calibrate_capacity(const HospitalScenario& scenario, const TransferPolicy& policy, double target,
                       const SimOptions& options, std::uint64_t seed) {
  if (!(target > 0.0 && target <= 1.0)) throw ValidationError("calibrate_capacity: target must lie in (0, 1]");
  HospitalScenario unlimited = scenario;
  unlimited.icu_capacity = 1000000;
  const SimMetrics m = run_simulation(unlimited, policy, options, seed);
  const double busy = m.at("icu_occupancy").mean * unlimited.icu_capacity;
  return std::max(1, static_cast<int>(std::ceil(busy / target)));
}

}  // namespace icu
