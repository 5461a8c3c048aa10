#include "icu/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "icu/errors.hpp"
#include "icu/io.hpp"
#include "icu/policy.hpp"

namespace icu {

namespace {

using nlohmann::json;

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  const auto tag = [name](const std::exception& e) { return std::string("[") + name + "] " + e.what(); };
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ValidationError(tag(e));
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(tag(e));
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(tag(e));
  } catch (const std::exception& e) {
    throw std::runtime_error(tag(e));
  }
}

json policy_json(const PolicySummary& p) {
  return {{"policy", vector_to_json(p.policy.probs)},
          {"threshold", p.threshold},
          {"value", vector_to_json(p.value)},
          {"value_at_p0", p.value_at_p0}};
}

json assumption_json(const Assumption3Report& r) {
  json j{{"holds", r.holds},
         {"min_ratio_margin", r.min_ratio_margin},
         {"min_outside_margin", r.min_outside_margin},
         {"ratio_witness_score", r.ratio_witness_row < 0 ? -1 : r.ratio_witness_row + 1},
         {"outside_witness_score", r.outside_witness_row < 0 ? -1 : r.outside_witness_row + 1},
         {"description", r.describe()}};
  if (r.witness_kernel) j["witness_kernel"] = matrix_to_json(r.witness_kernel->matrix());
  return j;
}

json set_json(const UncertaintySet& set) {
  if (const auto* f = std::get_if<FactorModel>(&set)) return {{"kind", "factor"}, {"model", factor_model_to_json(*f)}};
  const auto& r = std::get<RectangularSet>(set);
  Eigen::MatrixXd lower(r.n(), r.nominal().cols());
  Eigen::MatrixXd upper(r.n(), r.nominal().cols());
  for (int i = 0; i < r.n(); ++i) {
    lower.row(i) = r.rows()[i].lower.transpose();
    upper.row(i) = r.rows()[i].upper.transpose();
  }
  return {{"kind", "rectangular"}, {"lower", matrix_to_json(lower)}, {"upper", matrix_to_json(upper)}};
}

std::string nmf_cache_key(const NmfProblem& p, std::uint64_t seed) {
  std::ostringstream os;
  os << kernel_to_csv(p.target) << p.rank << ',' << p.starts << ',' << p.iters << ',' << std::setprecision(17) << p.tol
     << ',' << p.inner_steps << ',' << seed;
  return fnv1a_hex(os.str());
}

NmfSolution solution_from_factors(const Eigen::MatrixXd& target, Eigen::MatrixXd u, Eigen::MatrixXd w) {
  NmfSolution s;
  s.u = std::move(u);
  s.w = std::move(w);
  s.objective = nmf_objective(target, s.u, s.w);
  s.residuals = nmf_residuals(target, s.approximation());
  return s;
}

struct NmfStageResult {
  NmfSolution solution;
  bool cached = false;
  std::string key;
};

NmfStageResult factorize(const ScenarioDocument& doc, const PipelineOptions& options) {
  const Eigen::MatrixXd& target = doc.kernel.matrix();
  if (const auto& fm = doc.uncertainty.factor_model) return {solution_from_factors(target, fm->u(), fm->w_nominal()), false, ""};
  NmfProblem problem;
  problem.target = doc.kernel;
  problem.rank = doc.nmf.rank;
  problem.starts = doc.nmf.starts;
  problem.iters = doc.nmf.iters;
  problem.tol = doc.nmf.tol;
  const std::string key = nmf_cache_key(problem, doc.seeds.nmf);
  const std::filesystem::path cache =
      options.nmf_cache_dir.empty() ? std::filesystem::path() : std::filesystem::path(options.nmf_cache_dir) / ("nmf-" + key + ".json");
  if (!cache.empty() && std::filesystem::exists(cache)) {
    const json j = json::parse(read_text_file(cache.string()));
    NmfSolution s = solution_from_factors(target, matrix_from_json(j.at("u"), "cached u"), matrix_from_json(j.at("w"), "cached w"));
    s.start_index = j.at("start_index").get<int>();
    s.sweeps = j.at("sweeps").get<int>();
    return {std::move(s), true, key};
  }
  NmfSolution s = nmf_factorize(problem, doc.seeds.nmf, options.exec);
  if (!cache.empty()) {
    const json j{{"u", matrix_to_json(s.u)}, {"w", matrix_to_json(s.w)}, {"start_index", s.start_index}, {"sweeps", s.sweeps}};
    write_text_file(cache.string(), j.dump(2));
  }
  return {std::move(s), false, key};
}

UncertaintySet build_set(SetFamily family, const ScenarioDocument& doc, const NmfSolution& nmf, const PipelineOptions& options) {
  switch (family) {
    case SetFamily::min:
      if (doc.uncertainty.factor_model) return *doc.uncertainty.factor_model;
      return build_u_min(nmf, doc.confidence.alpha);
    case SetFamily::emp:
      return FactorModel(nmf.u, nmf.w,
                         bootstrap_factor_sets(doc.kernel, doc.confidence.alpha, nmf.u, nmf.w, doc.uncertainty.emp_samples,
                                               doc.seeds.bootstrap, options.exec));
    case SetFamily::sa:
      return RectangularSet::from_alpha(doc.kernel, doc.confidence.alpha);
  }
  throw ValidationError("unknown uncertainty family");
}

int count_outside_intervals(const Eigen::MatrixXd& m, const TransitionKernel& nominal, const Eigen::VectorXd& alpha) {
  constexpr double kTol = 1e-12;
  int count = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double d = m(i, j) - nominal(static_cast<int>(i), static_cast<int>(j));
      count += d < -alpha[i] - kTol || d > 2.0 * alpha[i] + kTol;
    }
  }
  return count;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(17) << "metric,nominal,mean_relative_deviation,max_relative_deviation\n";
  for (const auto& r : rows) {
    os << r.metric << ',' << r.nominal << ',' << r.mean_relative_deviation << ',' << r.max_relative_deviation << '\n';
  }
  return os.str();
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string create_run_dir(const std::string& root) {
  std::filesystem::create_directories(root);
  for (int k = 1; k <= 9999; ++k) {
    std::ostringstream name;
    name << "run-" << std::setw(4) << std::setfill('0') << k;
    const std::filesystem::path p = std::filesystem::path(root) / name.str();
    if (std::filesystem::create_directory(p)) return p.string();
  }
  throw ValidationError("no free run directory under " + root);
}

PolicySummary solve_nominal(const TransitionKernel& kernel, const MdpRewards& rewards, const Eigen::VectorXd& p0) {
  ViResult vi = value_iteration(kernel, rewards);
  PolicySummary s;
  s.threshold = is_threshold(vi.policy).value_or(-1);
  s.value_at_p0 = p0.dot(vi.value.head(kernel.n()));
  s.policy = std::move(vi.policy);
  s.value = std::move(vi.value);
  return s;
}

PipelineResult run_pipeline(ScenarioDocument doc, const PipelineOptions& options) {
  PipelineResult res;
  stage("scenario", [&] {
    if (options.seed) doc.seeds = SeedSettings::from_base(*options.seed);
    if (options.reps) doc.simulation.reps = *options.reps;
    if (options.regime) doc.hospital.regimes = {*options.regime};
    if (options.families) doc.uncertainty.families = *options.families;
    doc.simulation.exec = options.exec;
    doc.validate();
  });
  const int n = doc.n();
  const Eigen::VectorXd& p0 = doc.initial_distribution;
  res.nominal = stage("nominal", [&] { return solve_nominal(doc.kernel, doc.rewards, p0); });

  NmfStageResult nmf = stage("nmf", [&] { return factorize(doc, options); });
  res.nmf = nmf.solution;
  res.nmf_cached = nmf.cached;
  const TransitionKernel nmf_kernel =
      stage("nmf", [&] { return TransitionKernel::normalized(res.nmf.approximation()); });

  for (SetFamily family : doc.uncertainty.families) {
    FamilyResult fr;
    fr.family = family;
    const std::string name = "uncertainty:" + family_name(family);
    fr.set = stage(name.c_str(), [&] { return build_set(family, doc, res.nmf, options); });
    fr.check = stage(name.c_str(), [&] { return check_assumption_3(fr.set, doc.rewards); });
    fr.waived = !fr.check.holds;
    const std::string robust_name = "robust:" + family_name(family);
    fr.robust = stage(robust_name.c_str(), [&] {
      RobustOptions ro;
      ro.waive_assumption = fr.waived;
      ro.exec = options.exec;
      RobustSolution sol = robust_value_iteration(fr.set, doc.rewards, ro);
      PolicySummary s;
      s.threshold = is_threshold(sol.policy).value_or(-1);
      s.value_at_p0 = p0.dot(sol.value.head(n));
      s.policy = std::move(sol.policy);
      s.value = std::move(sol.value);
      return s;
    });
    const std::string worst_name = "worst_case:" + family_name(family);
    stage(worst_name.c_str(), [&] {
      for (int tau : doc.thresholds) {
        fr.worst.push_back(worst_case_kernel(TransferPolicy::threshold(n, tau), fr.set, doc.rewards, p0));
        fr.out_of_interval.push_back(
            count_outside_intervals(fr.worst.back().kernel.matrix(), doc.kernel, doc.confidence.alpha));
      }
    });
    res.families.push_back(std::move(fr));
  }

  res.icu_capacity = stage("capacity", [&] {
    if (doc.hospital.icu_capacity) return *doc.hospital.icu_capacity;
    const HospitalScenario probe = doc.hospital_scenario(doc.kernel, 1, doc.hospital.regimes.front());
    return calibrate_capacity(probe, TransferPolicy::threshold(n, n + 1), doc.hospital.target_occupancy, doc.simulation,
                              doc.seeds.simulation);
  });

  std::vector<LabeledKernels> labeled{{"nominal", {doc.kernel}}, {"nmf", {nmf_kernel}}};
  for (const FamilyResult& fr : res.families) {
    LabeledKernels lk{"worst_" + family_name(fr.family), {}};
    for (const WorstCase& wc : fr.worst) lk.per_threshold.push_back(wc.kernel);
    labeled.push_back(std::move(lk));
  }
  const TransferPolicy& sensitivity_policy = doc.policy ? *doc.policy : res.nominal.policy;
  for (DischargeRegime regime : doc.hospital.regimes) {
    const std::string rn = regime_name(regime);
    const HospitalScenario scenario = doc.hospital_scenario(doc.kernel, res.icu_capacity, regime);
    res.sweeps[rn] = stage(("sweep:" + rn).c_str(), [&] {
      return threshold_sweep(scenario, labeled, doc.thresholds, doc.simulation, doc.seeds.simulation);
    });
    if (doc.sensitivity_samples > 0) {
      res.sensitivity[rn] = stage(("sensitivity:" + rn).c_str(), [&] {
        const auto samples =
            sample_kernels_in_ci(doc.kernel, doc.confidence, doc.sensitivity_samples, doc.seeds.sampling, options.exec);
        return sensitivity_sweep(scenario, sensitivity_policy, samples, doc.simulation, doc.seeds.simulation);
      });
    }
  }

  stage("bundle", [&] {
    res.run_dir = create_run_dir(options.out_root);
    const std::filesystem::path dir(res.run_dir);
    json files = json::array();
    const auto emit = [&](const std::string& rel, const std::string& text) {
      write_text_file((dir / rel).string(), text);
      files.push_back({{"path", rel}, {"fnv1a", fnv1a_hex(text)}, {"bytes", text.size()}});
    };
    const std::string scenario_text = scenario_to_json(doc).dump(2);
    emit("scenario.json", scenario_text);
    emit("nominal.json", policy_json(res.nominal).dump(2));
    emit("nominal_kernel.csv", kernel_to_csv(doc.kernel));
    const bool positive_radii = (doc.confidence.alpha.array() > 0.0).all();
    const json max_abs_ratio =
        positive_radii ? json(residual_report(res.nmf.approximation(), doc.kernel, doc.confidence.alpha).abs_ratio.max)
                       : json(nullptr);
    emit("nmf.json", json{{"u", matrix_to_json(res.nmf.u)},
                          {"w", matrix_to_json(res.nmf.w)},
                          {"objective", res.nmf.objective},
                          {"l1", res.nmf.residuals.l1},
                          {"linf", res.nmf.residuals.linf},
                          {"relative_max", res.nmf.residuals.relative_max},
                          {"out_of_interval", count_outside_intervals(res.nmf.approximation(), doc.kernel, doc.confidence.alpha)},
                          {"max_abs_ratio", max_abs_ratio},
                          {"start_index", res.nmf.start_index},
                          {"cached", res.nmf_cached},
                          {"provided", doc.uncertainty.factor_model.has_value()}}
                         .dump(2));
    emit("nmf_kernel.csv", kernel_to_csv(nmf_kernel));

    std::ostringstream worst_summary;
    worst_summary << std::setprecision(17) << "family,threshold,reward,out_of_interval\n";
    json family_summary = json::object();
    for (const FamilyResult& fr : res.families) {
      const std::string fam = family_name(fr.family);
      emit("uncertainty/" + fam + ".json", json{{"family", fam},
                                                {"set", set_json(fr.set)},
                                                {"assumption", assumption_json(fr.check)},
                                                {"waived", fr.waived},
                                                {"robust", policy_json(fr.robust)}}
                                               .dump(2));
      for (std::size_t k = 0; k < doc.thresholds.size(); ++k) {
        const int tau = doc.thresholds[k];
        emit("worst_case/" + fam + "_tau" + std::to_string(tau) + ".csv", kernel_to_csv(fr.worst[k].kernel));
        worst_summary << fam << ',' << tau << ',' << fr.worst[k].reward << ',' << fr.out_of_interval[k] << '\n';
      }
      family_summary[fam] = {{"conditions_hold", fr.check.holds}, {"waived", fr.waived}, {"robust_threshold", fr.robust.threshold}};
    }
    emit("worst_case_summary.csv", worst_summary.str());
    for (const auto& [rn, rows] : res.sweeps) emit("sweep_" + rn + ".csv", sweep_csv(rows));
    for (const auto& [rn, rows] : res.sensitivity) emit("sensitivity_" + rn + ".csv", sensitivity_csv(rows));

    json regimes = json::array();
    for (DischargeRegime g : doc.hospital.regimes) regimes.push_back(regime_name(g));
    res.manifest = {
        {"scenario_version", doc.version},
        {"scenario_name", doc.name},
        {"scenario_fnv1a", fnv1a_hex(scenario_text)},
        {"seeds",
         {{"nmf", doc.seeds.nmf},
          {"bootstrap", doc.seeds.bootstrap},
          {"simulation", doc.seeds.simulation},
          {"sampling", doc.seeds.sampling}}},
        {"seed_override", options.seed ? json(*options.seed) : json(nullptr)},
        {"tolerances",
         {{"value_iteration", ViOptions{}.tol},
          {"robust_value_iteration", RobustOptions{}.tol},
          {"nmf", doc.nmf.tol},
          {"kernel_rows", 1e-9}}},
        {"nmf", {{"rank", doc.nmf.rank}, {"starts", doc.nmf.starts}, {"iters", doc.nmf.iters}, {"cache_key", nmf.key},
                 {"cached", res.nmf_cached}}},
        {"simulation",
         {{"horizon", doc.simulation.horizon}, {"warmup", doc.simulation.warmup}, {"reps", doc.simulation.reps}}},
        {"icu_capacity", res.icu_capacity},
        {"icu_capacity_calibrated", !doc.hospital.icu_capacity.has_value()},
        {"regimes", regimes},
        {"thresholds", doc.thresholds},
        {"kernel_labels", [&] {
           json labels = json::array();
           for (const auto& lk : labeled) labels.push_back(lk.label);
           return labels;
         }()},
        {"nominal_threshold", res.nominal.threshold},
        {"families", family_summary},
        {"files", files},
    };
    write_text_file((dir / "manifest.json").string(), res.manifest.dump(2));
  });
  res.scenario = std::move(doc);
  return res;
}

}  // namespace icu
