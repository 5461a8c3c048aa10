#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "icu/errors.hpp"
#include "icu/fleet.hpp"
#include "icu/io.hpp"
#include "icu/mdp.hpp"
#include "icu/nmf.hpp"
#include "icu/parallel.hpp"
#include "icu/pipeline.hpp"
#include "icu/scenario.hpp"

using namespace icu;

namespace {

std::vector<SetFamily> parse_uncertainty(const std::string& s) {
  if (s == "all") return {SetFamily::min, SetFamily::emp, SetFamily::sa};
  return {parse_family(s)};
}

void print_kernel_rows(std::ostream& os, const TransitionKernel& k, std::vector<int> rows) {
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  for (int i : rows) {
    if (i < 0 || i >= k.n()) continue;
    os << "    " << state_label(k.n(), i) << ":";
    for (int j = 0; j < k.cols(); ++j) os << ' ' << k.column_label(j) << '=' << k(i, j);
    os << '\n';
  }
}

int cmd_estimate(const std::string& input, const std::string& out, int scores, double level) {
  std::ifstream in(input);
  if (!in) throw ValidationError("cannot read " + input);
  const TrajectorySet data = trajectories_from_csv(in, scores);
  const KernelEstimate est = estimate_kernel(data);
  const ConfidenceSpec radii = confidence_radii(est.counts, level);
  const nlohmann::json j{{"n", data.n()},
                         {"trajectories", data.size()},
                         {"transitions", data.transition_count()},
                         {"columns", [&] {
                            std::vector<std::string> c;
                            for (int k = 0; k < est.kernel.cols(); ++k) c.push_back(est.kernel.column_label(k));
                            return c;
                          }()},
                         {"kernel", matrix_to_json(est.kernel.matrix())},
                         {"counts", matrix_to_json(est.counts)},
                         {"alpha", vector_to_json(radii.alpha)},
                         {"level", radii.level}};
  write_text_file(out, j.dump(2) + "\n");
  std::cout << "estimated " << data.n() << "-score kernel from " << data.transition_count() << " transitions in "
            << data.size() << " trajectories -> " << out << '\n';
  return 0;
}

int cmd_check(const ScenarioDocument& doc, const std::optional<std::vector<SetFamily>>& families, std::uint64_t nmf_seed) {
  std::cout << std::setprecision(6);
  std::cout << "scenario: " << (doc.name.empty() ? "(unnamed)" : doc.name) << ", " << doc.n() << " scores\n";
  const bool rewards_ok = check_assumption_0(doc.rewards);
  std::cout << "reward condition (r_W / (1 - lambda) <= r_W + lambda r_RL): " << (rewards_ok ? "pass" : "FAIL") << '\n';
  const KernelAssumptionReport k = check_assumption_1(doc.kernel, doc.rewards);
  std::cout << "kernel outside-option monotonicity (cond2): "
            << (k.cond2 ? std::string("pass")
                        : "FAIL at i=" + std::to_string(k.cond2_witness + 1) + " (scores " +
                              std::to_string(k.cond2_witness + 1) + " and " + std::to_string(k.cond2_witness + 2) + ")")
            << '\n';
  std::cout << "kernel ward-mass ratio (cond3): "
            << (k.cond3 ? std::string("pass")
                        : "FAIL at i=" + std::to_string(k.cond3_witness + 1) + (k.degenerate ? " (zero ward mass)" : ""))
            << '\n';
  if (!k.all()) print_kernel_rows(std::cout, doc.kernel, {std::max(k.cond2_witness, k.cond3_witness), std::max(k.cond2_witness, k.cond3_witness) + 1});

  std::vector<SetFamily> fams;
  if (families) {
    fams = *families;
  } else {
    if (doc.uncertainty.factor_model) fams.push_back(SetFamily::min);
    fams.push_back(SetFamily::sa);
  }
  std::optional<NmfSolution> nmf;
  for (SetFamily f : fams) {
    UncertaintySet set;
    if (f == SetFamily::sa) {
      set = RectangularSet::from_alpha(doc.kernel, doc.confidence.alpha);
    } else if (f == SetFamily::min && doc.uncertainty.factor_model) {
      set = *doc.uncertainty.factor_model;
    } else {
      if (!nmf) {
        NmfProblem p;
        p.target = doc.kernel;
        p.rank = doc.nmf.rank;
        p.starts = doc.nmf.starts;
        p.iters = doc.nmf.iters;
        p.tol = doc.nmf.tol;
        nmf = nmf_factorize(p, nmf_seed);
      }
      set = f == SetFamily::min ? build_u_min(*nmf, doc.confidence.alpha)
                                : FactorModel(nmf->u, nmf->w,
                                              bootstrap_factor_sets(doc.kernel, doc.confidence.alpha, nmf->u, nmf->w,
                                                                    doc.uncertainty.emp_samples, doc.seeds.bootstrap));
    }
    const Assumption3Report r = check_assumption_3(set, doc.rewards);
    std::cout << "uncertainty set " << family_name(f) << ": " << (r.holds ? "pass" : "FAIL") << " - " << r.describe()
              << '\n';
    if (!r.holds && r.witness_kernel) {
      std::cout << "  minimizing kernel at the witness rows:\n";
      print_kernel_rows(std::cout, *r.witness_kernel,
                        {r.ratio_witness_row, r.ratio_witness_row + 1, r.outside_witness_row, r.outside_witness_row + 1});
    }
  }
  return 0;
}

int cmd_pipeline(const ScenarioDocument& doc, const PipelineOptions& options) {
  const PipelineResult res = run_pipeline(doc, options);
  std::cout << "run directory: " << res.run_dir << '\n';
  std::cout << "nominal threshold: " << res.nominal.threshold << '\n';
  for (const FamilyResult& fr : res.families) {
    std::cout << "robust threshold (" << family_name(fr.family) << "): " << fr.robust.threshold
              << (fr.waived ? " [structural conditions fail over the set]" : "") << '\n';
  }
  std::cout << "ICU capacity: " << res.icu_capacity << '\n';
  return 0;
}

int cmd_fleet(const ScenarioDocument& doc, const std::string& out, int patients, int points) {
  Instance base{doc.kernel, doc.reward_spec.value_or(RewardSpec{}), doc.rewards, doc.initial_distribution};
  const WhittleSweep w = whittle_sweep(base, transfer_reward_grid(base, points));
  std::vector<int> ms;
  for (int m = 1; m <= patients; ++m) ms.push_back(m);
  const auto caps = m_sensitivity(base, patients, ms, points);
  const LagrangianCurve curve = lagrangian_curve({patients, std::max(1, patients / 4), base}, points);
  write_text_file(out + "/whittle.csv", whittle_csv(w));
  write_text_file(out + "/capacity.csv", capacity_csv(caps));
  write_text_file(out + "/lagrangian.csv", lagrangian_csv(curve));
  std::cout << "thresholds monotone in r_PT: " << (w.monotone() ? "yes" : "no") << "; wrote " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICU transfer policies: estimation, robust solves and hospital simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 keeps the runtime default)")->check(CLI::NonNegativeNumber);

  auto* estimate = app.add_subcommand("estimate", "Estimate a kernel and confidence radii from trajectories");
  std::string traj_path;
  std::string out;
  int scores = 0;
  double level = 0.95;
  estimate->add_option("trajectories", traj_path, "CSV with header id,period,state")->required();
  estimate->add_option("--out", out, "Output JSON")->required();
  estimate->add_option("--scores", scores, "Number of severity scores (inferred when omitted)");
  estimate->add_option("--level", level, "Simultaneous confidence level");

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::string regime;
  std::string uncertainty;

  auto* pipeline = app.add_subcommand("pipeline", "Run the full experiment and write a result bundle");
  pipeline->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  pipeline->add_option("--out", out, "Parent directory of run directories")->required();
  pipeline->add_option("--seed", seed, "Base seed replacing the scenario seeds");
  pipeline->add_option("--reps", reps, "Simulation replications");
  pipeline->add_option("--regime", regime, "Discharge regime")->check(CLI::IsMember({"ddd", "queue"}));
  pipeline->add_option("--uncertainty", uncertainty, "Uncertainty families")->check(CLI::IsMember({"min", "emp", "sa", "all"}));

  auto* check = app.add_subcommand("check", "Report the structural conditions of a scenario");
  check->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  check->add_option("--uncertainty", uncertainty, "Uncertainty families")->check(CLI::IsMember({"min", "emp", "sa", "all"}));
  check->add_option("--seed", seed, "Base seed replacing the scenario seeds");

  auto* fleet = app.add_subcommand("fleet", "Write index, multiplier and capacity curves for identical patients");
  int patients = 10;
  int points = 101;
  fleet->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  fleet->add_option("--out", out, "Output directory")->required();
  fleet->add_option("--patients", patients, "Number of patients")->check(CLI::PositiveNumber);
  fleet->add_option("--points", points, "Grid points")->check(CLI::Range(3, 100000));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) set_thread_count(threads);
    if (*estimate) return cmd_estimate(traj_path, out, scores, level);
    ScenarioDocument doc = load_scenario(scenario_path);
    if (seed) doc.seeds = SeedSettings::from_base(*seed);
    const std::optional<std::vector<SetFamily>> families =
        uncertainty.empty() ? std::nullopt : std::optional(parse_uncertainty(uncertainty));
    if (*check) return cmd_check(doc, families, doc.seeds.nmf);
    if (*fleet) return cmd_fleet(doc, out, patients, points);
    PipelineOptions options;
    options.out_root = out;
    options.seed = seed;
    options.reps = reps;
    if (!regime.empty()) options.regime = parse_regime(regime);
    options.families = families;
    if (const char* cache = std::getenv("ICU_NMF_CACHE")) options.nmf_cache_dir = cache;
    return cmd_pipeline(doc, options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
