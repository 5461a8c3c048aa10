#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "icu/io.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args) {
  const std::string cmd = std::string(ICU_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(ICU_DATA_DIR) + "/" + name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("icu_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, CheckReportsCounterexampleViolation) {
  const CliRun r = run_cli("check --scenario " + data("counterexample.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("(cond2): FAIL at i=1"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("reward condition"), std::string::npos);
}

TEST(Cli, CheckPassesOnDemoScenario) {
  const CliRun r = run_cli("check --scenario " + data("demo_scenario.json"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("reward condition (r_W / (1 - lambda) <= r_W + lambda r_RL): pass"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(cond2): pass"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("(cond3): pass"), std::string::npos) << r.out;
}

TEST(Cli, CheckPrintsMinimizingKernelForWidenedSet) {
  const CliRun r = run_cli("check --scenario " + data("widened_set.json") + " --uncertainty min");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("uncertainty set min: FAIL"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("minimizing kernel"), std::string::npos) << r.out;
}

TEST(Cli, EstimateWritesKernelCountsAndRadii) {
  const fs::path dir = scratch("estimate");
  fs::create_directories(dir);
  std::ofstream(dir / "traj.csv") << "id,period,state\n1,0,S1\n1,1,RL\n2,0,S2\n2,1,D\n";
  const CliRun r = run_cli("estimate " + (dir / "traj.csv").string() + " --out " + (dir / "out.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(icu::read_text_file((dir / "out.json").string()));
  EXPECT_EQ(j["transitions"], 2);
  EXPECT_EQ(j["n"], 2);
  EXPECT_EQ(j["alpha"].size(), 2u);
  EXPECT_EQ(j["counts"][0][3], 1.0);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  fs::create_directories(dir);
  std::ofstream(dir / "empty.csv") << "";
  EXPECT_EQ(run_cli("estimate " + (dir / "empty.csv").string() + " --out " + (dir / "o.json").string()).code, 2);

  auto doc = nlohmann::json::parse(icu::read_text_file(data("counterexample.json")));
  doc["nmf"].erase("rank");
  std::ofstream(dir / "norank.json") << doc.dump();
  const CliRun norank = run_cli("check --scenario " + (dir / "norank.json").string());
  EXPECT_EQ(norank.code, 2);
  EXPECT_NE(norank.out.find("nmf.rank"), std::string::npos) << norank.out;

  EXPECT_EQ(run_cli("pipeline --scenario " + data("demo_scenario.json")).code, 2);
  EXPECT_EQ(run_cli("pipeline --scenario x --out y --regime fifo").code, 2);
  EXPECT_EQ(run_cli("--help").code, 0);
  fs::remove_all(dir);
}

TEST(Cli, DemoPipelineProducesElevenThresholdTables) {
  const fs::path out = scratch("demo");
  const CliRun r = run_cli("pipeline --scenario " + data("demo_scenario.json") + " --out " + out.string() +
                        " --reps 2 --regime ddd --threads 2");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("nominal threshold: 3"), std::string::npos) << r.out;
  const fs::path run = out / "run-0001";
  std::istringstream csv(icu::read_text_file((run / "sweep_ddd.csv").string()));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "threshold,kernel_label,metric,value,stderr");
  std::map<std::string, std::set<int>> thresholds;
  while (std::getline(csv, line)) {
    std::istringstream ss(line);
    std::string tau, label, metric;
    std::getline(ss, tau, ',');
    std::getline(ss, label, ',');
    std::getline(ss, metric, ',');
    if (metric == "mortality") thresholds[label].insert(std::stoi(tau));
  }
  ASSERT_EQ(thresholds.size(), 5u);
  for (const auto& [label, taus] : thresholds) {
    EXPECT_EQ(taus.size(), 11u) << label;
    EXPECT_EQ(*taus.begin(), 1) << label;
    EXPECT_EQ(*taus.rbegin(), 11) << label;
  }
  const auto manifest = nlohmann::json::parse(icu::read_text_file((run / "manifest.json").string()));
  EXPECT_EQ(manifest["simulation"]["reps"], 2);
  EXPECT_EQ(manifest["kernel_labels"].size(), 5u);
  fs::remove_all(out);
}
