#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "icu/errors.hpp"
#include "icu/estimation.hpp"
#include "icu/generators.hpp"
#include "icu/io.hpp"
#include "icu/pipeline.hpp"
#include "icu/scenario.hpp"

using namespace icu;
namespace fs = std::filesystem;

namespace {

std::string data_path(const std::string& name) { return std::string(ICU_DATA_DIR) + "/" + name; }

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("icu_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

nlohmann::json small_scenario_json(const Instance& inst, double alpha) {
  const int n = inst.kernel.n();
  nlohmann::json j;
  j["version"] = 1;
  j["name"] = "small";
  j["kernel"] = matrix_to_json(inst.kernel.matrix());
  j["rewards"] = mdp_rewards_to_json(inst.rewards);
  j["initial_distribution"] = vector_to_json(inst.p0);
  j["confidence"] = {{"alpha", std::vector<double>(n, alpha)}};
  j["nmf"] = {{"rank", n}, {"starts", 4}, {"iters", 3000}, {"tol", 1e-14}};
  j["uncertainty"] = {{"emp_samples", 8}};
  j["hospital"] = {{"icu_capacity", 6}, {"ward_load", 1.0}};
  j["simulation"] = {{"horizon", 160}, {"warmup", 20}, {"reps", 2}};
  j["sensitivity"] = {{"samples", 2}};
  return j;
}

Instance small_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratorOptions o;
  o.n_min = 3;
  o.n_max = 3;
  o.conditions_at_zero_transfer_reward = false;
  return generate_instance(rng, o);
}

}  // namespace

TEST(KernelCsv, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  const Instance inst = generate_instance(rng);
  std::istringstream in(kernel_to_csv(inst.kernel));
  const TransitionKernel back = kernel_from_csv(in);
  EXPECT_EQ(back.matrix(), inst.kernel.matrix());
}

TEST(KernelCsv, ErrorsNameTheLine) {
  std::istringstream bad_value("2\nS1,S2,CR,RL,D\nS1,S2\n0.5,0,0,0.5,0\n0,x,0,1,0\n");
  EXPECT_NE(error_of([&] { kernel_from_csv(bad_value); }).find("line 5"), std::string::npos);
  std::istringstream bad_label("2\nS1,S2,CR,RL,DEAD\nS1,S2\n");
  EXPECT_NE(error_of([&] { kernel_from_csv(bad_label); }).find("line 2"), std::string::npos);
  std::istringstream short_file("2\nS1,S2,CR,RL,D\nS1,S2\n0.5,0,0,0.5,0\n");
  EXPECT_THROW(kernel_from_csv(short_file), ValidationError);
  std::istringstream bad_row("1\nS1,CR,RL,D\nS1\n0.5,0.2,0.2,0.2\n");
  EXPECT_THROW(kernel_from_csv(bad_row), ValidationError);
}

TEST(TrajectoryCsv, TwoTrajectoriesGiveTwoTransitions) {
  std::istringstream in("id,period,state\na,0,S1\na,1,RL\nb,0,S2\nb,1,D\n");
  const TrajectorySet data = trajectories_from_csv(in);
  ASSERT_EQ(data.n(), 2);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data.transition_count(), 2u);
  const KernelEstimate est = estimate_kernel(data, Exec::serial);
  EXPECT_EQ(est.counts.sum(), 2.0);
  EXPECT_EQ(est.kernel(0, 2 + kRL), 1.0);
  EXPECT_EQ(est.kernel(1, 2 + kD), 1.0);
}

TEST(TrajectoryCsv, MalformedInputNamesTheLine) {
  std::istringstream empty("");
  EXPECT_THROW(trajectories_from_csv(empty), ValidationError);
  std::istringstream header_only("id,period,state\n");
  EXPECT_THROW(trajectories_from_csv(header_only), ValidationError);
  std::istringstream gap("id,period,state\na,0,S1\na,2,RL\n");
  EXPECT_NE(error_of([&] { trajectories_from_csv(gap); }).find("line 3"), std::string::npos);
  std::istringstream fields("id,period,state\na,0,S1,extra\n");
  EXPECT_NE(error_of([&] { trajectories_from_csv(fields); }).find("line 2"), std::string::npos);
  std::istringstream label("id,period,state\na,0,S1\na,1,ICU\n");
  EXPECT_NE(error_of([&] { trajectories_from_csv(label); }).find("line 3"), std::string::npos);
  std::istringstream after_exit("id,period,state\na,0,S1\na,1,D\na,2,S1\n");
  EXPECT_NE(error_of([&] { trajectories_from_csv(after_exit); }).find("line 4"), std::string::npos);
  std::istringstream late_start("id,period,state\na,1,S1\n");
  EXPECT_THROW(trajectories_from_csv(late_start), ValidationError);
}

TEST(TrajectoryCsv, SyntheticMillionRowsRoundTrip) {
  std::mt19937_64 rng(2);
  GeneratorOptions o;
  o.n_min = 4;
  o.n_max = 4;
  const Instance inst = generate_instance(rng, o);
  const Eigen::VectorXd start = Eigen::VectorXd::Constant(4, 0.25);
  const TrajectorySet synth = synth_trajectories(inst.kernel, start, 500000, 3);
  std::stringstream csv;
  trajectories_to_csv(csv, synth);
  const TrajectorySet back = trajectories_from_csv(csv, 4);
  ASSERT_EQ(back.size(), synth.size());
  std::size_t rows = 0;
  for (std::size_t k = 0; k < synth.size(); ++k) rows += synth[k].size();
  EXPECT_GE(rows, 1000000u);
  EXPECT_EQ(back.transition_count(), synth.transition_count());
  const KernelEstimate est = estimate_kernel(back);
  EXPECT_LE((est.kernel.matrix() - inst.kernel.matrix()).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(EventLog, OneJsonObjectPerLine) {
  std::ostringstream out;
  write_event_log(out, {{1.5, 3, SimEventKind::crash, 0.0}, {2.0, 4, SimEventKind::icu_admit, 7.25}});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto first = nlohmann::json::parse(line);
  EXPECT_EQ(first["kind"], event_kind_name(SimEventKind::crash));
  EXPECT_EQ(first["patient"], 3);
  std::getline(in, line);
  EXPECT_EQ(nlohmann::json::parse(line)["value"], 7.25);
}

TEST(JsonIo, FactorModelAndRewardsRoundTrip) {
  std::mt19937_64 rng(4);
  const RobustInstance ri = generate_robust_instance(rng);
  const FactorModel once = factor_model_from_json(factor_model_to_json(ri.model));
  EXPECT_TRUE(once.u().isApprox(ri.model.u(), 1e-14));
  EXPECT_TRUE(once.w_nominal().isApprox(ri.model.w_nominal(), 1e-14));
  const FactorModel twice = factor_model_from_json(factor_model_to_json(once));
  EXPECT_TRUE(twice.w_nominal().isApprox(once.w_nominal(), 1e-15));
  for (int l = 0; l < once.rank(); ++l) {
    EXPECT_EQ(twice.factor_sets()[l].lower, once.factor_sets()[l].lower);
    EXPECT_EQ(twice.factor_sets()[l].upper, once.factor_sets()[l].upper);
  }
  const RewardSpec spec = RewardSpec::experiment_default();
  const RewardSpec spec_back = reward_spec_from_json(reward_spec_to_json(spec));
  EXPECT_EQ(spec_back.r_PT(), spec.r_PT());
  EXPECT_EQ(spec_back.lambda, spec.lambda);
  EXPECT_THROW(reward_spec_from_json(nlohmann::json{{"r_W", 1.0}}), ValidationError);
}

TEST(Scenario, BundledScenariosLoad) {
  const ScenarioDocument demo = load_scenario(data_path("demo_scenario.json"));
  EXPECT_EQ(demo.n(), 10);
  EXPECT_EQ(demo.nmf.rank, 8);
  EXPECT_EQ(demo.thresholds.size(), 11u);
  EXPECT_TRUE(demo.reward_spec.has_value());
  const ScenarioDocument ce = load_scenario(data_path("counterexample.json"));
  EXPECT_EQ(ce.n(), 2);
  EXPECT_DOUBLE_EQ(ce.rewards.r_PT, 2.0);
  EXPECT_NO_THROW(load_scenario(data_path("widened_set.json")));
}

TEST(Scenario, JsonRoundTrip) {
  const ScenarioDocument demo = load_scenario(data_path("demo_scenario.json"));
  const ScenarioDocument back = scenario_from_json(scenario_to_json(demo));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(demo));
  EXPECT_EQ(back.kernel.matrix(), demo.kernel.matrix());
  EXPECT_EQ(back.seeds.simulation, demo.seeds.simulation);
  EXPECT_FALSE(back.hospital.icu_capacity.has_value());
}

TEST(Scenario, SchemaErrors) {
  const nlohmann::json base = small_scenario_json(small_instance(5), 0.01);
  ASSERT_NO_THROW(scenario_from_json(base));
  const auto message = [&](auto&& edit) {
    nlohmann::json j = base;
    edit(j);
    return error_of([&] { scenario_from_json(j); });
  };
  EXPECT_NE(message([](auto& j) { j["nmf"].erase("rank"); }).find("nmf.rank"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j.erase("version"); }).find("version"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["version"] = 2; }).find("version"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["confidence"]["alpha"] = {0.1, 0.1}; }).find("confidence.alpha"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["policy"] = {0.0, 1.0}; }).find("policy"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["initial_distribution"] = {1.0}; }).find("initial_distribution"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["thresholds"] = {5}; }).find("threshold 5"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["simulaton"] = nlohmann::json::object(); }).find("simulaton"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["hospital"]["overrides"] = {{"rho_X", 0.1}}; }).find("rho_X"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["hospital"]["regimes"] = {"fifo"}; }).find("fifo"), std::string::npos);
  EXPECT_NE(message([](auto& j) { j["uncertainty"]["families"] = {"box"}; }).find("box"), std::string::npos);
  nlohmann::json no_conf = base;
  no_conf.erase("confidence");
  EXPECT_THROW(scenario_from_json(no_conf), ValidationError);
}

TEST(Scenario, OverridesReachTheHospital) {
  nlohmann::json j = small_scenario_json(small_instance(6), 0.01);
  j["hospital"]["overrides"] = {{"rho_D", 0.3}, {"crash_los_mean_days", 9.0}};
  const ScenarioDocument d = scenario_from_json(j);
  const HospitalScenario h = d.hospital_scenario(d.kernel, 4, DischargeRegime::waiting_queue);
  EXPECT_EQ(h.rho_D, 0.3);
  EXPECT_EQ(h.crash_los.mean_days, 9.0);
  EXPECT_EQ(h.icu_capacity, 4);
  EXPECT_EQ(h.regime, DischargeRegime::waiting_queue);
}

TEST(Pipeline, SingletonUncertaintyMatchesNominal) {
  const Instance inst = small_instance(7);
  const ScenarioDocument doc = scenario_from_json(small_scenario_json(inst, 0.0));
  PipelineOptions o;
  o.out_root = fresh_dir("singleton").string();
  const PipelineResult res = run_pipeline(doc, o);
  ASSERT_EQ(res.families.size(), 3u);
  const double scale = 1.0 + res.nominal.value.cwiseAbs().maxCoeff();
  const PolicySummary on_nmf =
      solve_nominal(TransitionKernel::normalized(res.nmf.approximation()), doc.rewards, doc.initial_distribution);
  for (const FamilyResult& fr : res.families) {
    const PolicySummary& reference = fr.family == SetFamily::sa ? res.nominal : on_nmf;
    EXPECT_EQ(fr.robust.policy, reference.policy) << family_name(fr.family);
    EXPECT_LT((fr.robust.value - reference.value).cwiseAbs().maxCoeff(), 1e-8 * scale) << family_name(fr.family);
  }
  const FamilyResult& sa = res.families.back();
  ASSERT_EQ(sa.family, SetFamily::sa);
  for (const WorstCase& wc : sa.worst) EXPECT_LT((wc.kernel.matrix() - doc.kernel.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  for (int v : sa.out_of_interval) EXPECT_EQ(v, 0);
  fs::remove_all(o.out_root);
}

TEST(Pipeline, BundleLayoutAndAppendOnlyRuns) {
  const ScenarioDocument doc = scenario_from_json(small_scenario_json(small_instance(8), 0.01));
  PipelineOptions o;
  o.out_root = fresh_dir("bundle").string();
  o.regime = DischargeRegime::demand_driven;
  o.families = std::vector<SetFamily>{SetFamily::sa};
  const PipelineResult first = run_pipeline(doc, o);
  EXPECT_EQ(fs::path(first.run_dir).filename(), "run-0001");
  for (const char* f : {"manifest.json", "scenario.json", "nominal.json", "nmf.json", "sweep_ddd.csv",
                        "sensitivity_ddd.csv", "worst_case_summary.csv", "uncertainty/sa.json", "worst_case/sa_tau1.csv"}) {
    EXPECT_TRUE(fs::exists(fs::path(first.run_dir) / f)) << f;
  }
  EXPECT_FALSE(fs::exists(fs::path(first.run_dir) / "sweep_queue.csv"));
  const std::string manifest_before = read_text_file(first.run_dir + "/manifest.json");

  o.exec = Exec::serial;
  const PipelineResult second = run_pipeline(doc, o);
  EXPECT_EQ(fs::path(second.run_dir).filename(), "run-0002");
  EXPECT_EQ(read_text_file(first.run_dir + "/manifest.json"), manifest_before);
  EXPECT_EQ(read_text_file(first.run_dir + "/sweep_ddd.csv"), read_text_file(second.run_dir + "/sweep_ddd.csv"));
  EXPECT_EQ(first.manifest["files"], second.manifest["files"]);

  const ScenarioDocument replay = load_scenario(first.run_dir + "/scenario.json");
  EXPECT_EQ(scenario_to_json(replay), scenario_to_json(first.scenario));

  const auto rows = first.sweeps.at("ddd");
  std::set<std::string> labels;
  for (const SweepRow& r : rows) labels.insert(r.kernel_label);
  EXPECT_EQ(labels, (std::set<std::string>{"nominal", "nmf", "worst_sa"}));
  fs::remove_all(o.out_root);
}

TEST(Pipeline, SeedOverrideChangesOnlySeededOutputs) {
  const ScenarioDocument doc = scenario_from_json(small_scenario_json(small_instance(9), 0.01));
  PipelineOptions o;
  o.out_root = fresh_dir("seed").string();
  o.regime = DischargeRegime::demand_driven;
  o.families = std::vector<SetFamily>{SetFamily::sa};
  o.seed = 99;
  const PipelineResult a = run_pipeline(doc, o);
  EXPECT_EQ(a.scenario.seeds.simulation, SeedSettings::from_base(99).simulation);
  EXPECT_EQ(a.manifest["seeds"]["simulation"], SeedSettings::from_base(99).simulation);
  o.seed = 100;
  const PipelineResult b = run_pipeline(doc, o);
  EXPECT_EQ(a.nominal.policy, b.nominal.policy);
  EXPECT_NE(read_text_file(a.run_dir + "/sweep_ddd.csv"), read_text_file(b.run_dir + "/sweep_ddd.csv"));
  fs::remove_all(o.out_root);
}

TEST(Pipeline, FailuresAreStageTagged) {
  const ScenarioDocument doc = scenario_from_json(small_scenario_json(small_instance(10), 0.01));
  const fs::path blocker = fresh_dir("blocker");
  std::ofstream(blocker.string()) << "not a directory";
  PipelineOptions o;
  o.out_root = (blocker / "runs").string();
  o.families = std::vector<SetFamily>{SetFamily::sa};
  o.regime = DischargeRegime::demand_driven;
  EXPECT_EQ(error_of([&] { run_pipeline(doc, o); }).rfind("[bundle]", 0), 0u);
  o.reps = 0;
  try {
    run_pipeline(doc, o);
    ADD_FAILURE() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("[scenario]", 0), 0u);
  }
  fs::remove(blocker);
}

TEST(Pipeline, NmfCacheReplaysTheFactorization) {
  const ScenarioDocument doc = scenario_from_json(small_scenario_json(small_instance(11), 0.01));
  PipelineOptions o;
  o.out_root = fresh_dir("cache_runs").string();
  o.nmf_cache_dir = fresh_dir("cache").string();
  o.regime = DischargeRegime::demand_driven;
  o.families = std::vector<SetFamily>{SetFamily::min};
  const PipelineResult a = run_pipeline(doc, o);
  const PipelineResult b = run_pipeline(doc, o);
  EXPECT_FALSE(a.nmf_cached);
  EXPECT_TRUE(b.nmf_cached);
  EXPECT_EQ(a.nmf.u, b.nmf.u);
  EXPECT_EQ(a.nmf.w, b.nmf.w);
  EXPECT_EQ(read_text_file(a.run_dir + "/sweep_ddd.csv"), read_text_file(b.run_dir + "/sweep_ddd.csv"));
  fs::remove_all(o.out_root);
  fs::remove_all(o.nmf_cache_dir);
}

TEST(Fnv, KnownDigests) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
