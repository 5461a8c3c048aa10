#include "icu/scenario.hpp"

#include <set>

#include "icu/errors.hpp"
#include "icu/io.hpp"
#include "icu/parallel.hpp"

namespace icu {

namespace {

using nlohmann::json;

std::string field_path(const std::string& where, const char* key) {
  return where == "<root>" ? std::string(key) : where + "." + key;
}

void require_object(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("scenario: " + (where == "<root>" ? std::string("document") : where) + " must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ValidationError("scenario: unknown field '" + field_path(where, key.c_str()) + "'");
  }
}

const json& required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError("scenario: missing required field '" + field_path(where, key) + "'");
  return j[key];
}

double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError("scenario: field '" + path + "' must be a number");
  return j.get<double>();
}

long get_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ValidationError("scenario: field '" + path + "' must be an integer");
  return j.get<long>();
}

std::uint64_t get_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ValidationError("scenario: field '" + path + "' must be a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

template <class T, class F>
void optional_field(const json& j, const char* key, T& target, F&& read) {
  if (j.contains(key)) target = read(j[key]);
}

using OverrideSetter = void (*)(HospitalScenario&, double);

const std::map<std::string, OverrideSetter>& override_table() {
  static const std::map<std::string, OverrideSetter> table{
      {"d_C", [](HospitalScenario& s, double v) { s.d_C = v; }},
      {"d_E", [](HospitalScenario& s, double v) { s.d_E = v; }},
      {"rho_C", [](HospitalScenario& s, double v) { s.rho_C = v; }},
      {"rho_E", [](HospitalScenario& s, double v) { s.rho_E = v; }},
      {"rho_D", [](HospitalScenario& s, double v) { s.rho_D = v; }},
      {"queue_death_prob", [](HospitalScenario& s, double v) { s.queue_death_prob = v; }},
      {"crash_los_mean_days", [](HospitalScenario& s, double v) { s.crash_los.mean_days = v; }},
      {"crash_los_sd_days", [](HospitalScenario& s, double v) { s.crash_los.sd_days = v; }},
      {"direct_los_mean_days", [](HospitalScenario& s, double v) { s.direct_los.mean_days = v; }},
      {"direct_los_sd_days", [](HospitalScenario& s, double v) { s.direct_los.sd_days = v; }},
      {"ward_icu_fraction", [](HospitalScenario& s, double v) { s.ward_icu_fraction.mean = v; }},
      {"direct_icu_fraction", [](HospitalScenario& s, double v) { s.direct_icu_fraction.mean = v; }},
      {"icu_fraction_kappa",
       [](HospitalScenario& s, double v) {
         s.ward_icu_fraction.kappa = v;
         s.direct_icu_fraction.kappa = v;
       }},
  };
  return table;
}

}  // namespace

std::string family_name(SetFamily f) {
  switch (f) {
    case SetFamily::min:
      return "min";
    case SetFamily::emp:
      return "emp";
    case SetFamily::sa:
      return "sa";
  }
  return "?";
}

SetFamily parse_family(const std::string& s) {
  if (s == "min") return SetFamily::min;
  if (s == "emp") return SetFamily::emp;
  if (s == "sa") return SetFamily::sa;
  throw ValidationError("unknown uncertainty family '" + s + "' (expected min, emp or sa)");
}

SeedSettings SeedSettings::from_base(std::uint64_t base) {
  return {derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2), derive_seed(base, 3)};
}

void ScenarioDocument::validate() const {
  if (version != kScenarioVersion) {
    throw ValidationError("scenario: unsupported version " + std::to_string(version) + " (expected " +
                          std::to_string(kScenarioVersion) + ")");
  }
  const int n = kernel.n();
  rewards.validate();
  if (initial_distribution.size() != n) {
    throw ValidationError("scenario: initial_distribution has length " + std::to_string(initial_distribution.size()) +
                          " but the kernel has " + std::to_string(n) + " scores");
  }
  validate_distribution(initial_distribution, 1e-9, "scenario initial_distribution");
  if (policy && policy->n() != n) {
    throw ValidationError("scenario: policy has length " + std::to_string(policy->n()) + " but the kernel has " +
                          std::to_string(n) + " scores");
  }
  if (confidence.alpha.size() != n) {
    throw ValidationError("scenario: confidence.alpha has length " + std::to_string(confidence.alpha.size()) +
                          " but the kernel has " + std::to_string(n) + " scores");
  }
  if ((confidence.alpha.array() < 0.0).any()) throw ValidationError("scenario: confidence.alpha must be nonnegative");
  if (!(confidence.level > 0.0 && confidence.level < 1.0)) throw ValidationError("scenario: confidence.level must be in (0, 1)");
  if (nmf.rank < 1 || nmf.rank > n + 3) throw ValidationError("scenario: nmf.rank must be in [1, n+3]");
  if (nmf.starts < 1 || nmf.iters < 1 || !(nmf.tol > 0.0)) {
    throw ValidationError("scenario: nmf.starts and nmf.iters must be positive and nmf.tol > 0");
  }
  if (uncertainty.families.empty()) throw ValidationError("scenario: uncertainty.families must not be empty");
  if (uncertainty.emp_samples < 2) throw ValidationError("scenario: uncertainty.emp_samples must be at least 2");
  if (const auto& fm = uncertainty.factor_model) {
    if (fm->n() != n) throw ValidationError("scenario: uncertainty.factor_model has the wrong number of scores");
    if (fm->rank() != nmf.rank) throw ValidationError("scenario: uncertainty.factor_model rank differs from nmf.rank");
  }
  if (!(hospital.ward_load >= 0.0) || !(hospital.direct_load >= 0.0)) {
    throw ValidationError("scenario: hospital loads must be nonnegative");
  }
  if (hospital.icu_capacity && *hospital.icu_capacity < 1) {
    throw ValidationError("scenario: hospital.icu_capacity must be positive");
  }
  if (!(hospital.target_occupancy > 0.0 && hospital.target_occupancy <= 1.0)) {
    throw ValidationError("scenario: hospital.target_occupancy must be in (0, 1]");
  }
  if (hospital.regimes.empty()) throw ValidationError("scenario: hospital.regimes must not be empty");
  for (const auto& [key, _] : hospital.overrides) {
    if (!override_table().count(key)) throw ValidationError("scenario: unknown hospital override '" + key + "'");
  }
  simulation.validate();
  if (thresholds.empty()) throw ValidationError("scenario: thresholds must not be empty");
  for (int tau : thresholds) {
    if (tau < 1 || tau > n + 1) {
      throw ValidationError("scenario: threshold " + std::to_string(tau) + " outside [1, " + std::to_string(n + 1) + "]");
    }
  }
  if (sensitivity_samples < 0) throw ValidationError("scenario: sensitivity.samples must be nonnegative");
  hospital_scenario(kernel, hospital.icu_capacity.value_or(1), hospital.regimes.front());
}

HospitalScenario ScenarioDocument::hospital_scenario(const TransitionKernel& k, int capacity,
                                                     DischargeRegime regime) const {
  HospitalScenario s = HospitalScenario::defaults(k, hospital.ward_load, hospital.direct_load, capacity);
  for (const auto& [key, value] : hospital.overrides) {
    const auto it = override_table().find(key);
    if (it == override_table().end()) throw ValidationError("scenario: unknown hospital override '" + key + "'");
    it->second(s, value);
  }
  s.regime = regime;
  s.validate();
  return s;
}

ScenarioDocument scenario_from_json(const json& j) {
  require_object(j, "<root>",
                 {"version", "name", "kernel", "rewards", "initial_distribution", "policy", "confidence", "nmf",
                  "uncertainty", "hospital", "simulation", "thresholds", "seeds", "sensitivity"});
  ScenarioDocument d;
  d.version = static_cast<int>(get_integer(required(j, "version", "<root>"), "version"));
  if (d.version != kScenarioVersion) {
    throw ValidationError("scenario: unsupported version " + std::to_string(d.version));
  }
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ValidationError("scenario: field 'name' must be a string");
    d.name = j["name"].get<std::string>();
  }
  d.kernel = TransitionKernel(matrix_from_json(required(j, "kernel", "<root>"), "scenario kernel"), 1e-9);
  const int n = d.kernel.n();

  const json& r = required(j, "rewards", "<root>");
  if (!r.is_object()) throw ValidationError("scenario: rewards must be an object");
  if (r.contains("r_PT_RL")) {
    d.reward_spec = reward_spec_from_json(r);
    d.rewards = MdpRewards(*d.reward_spec);
  } else {
    d.rewards = mdp_rewards_from_json(r);
  }

  d.initial_distribution = j.contains("initial_distribution")
                               ? vector_from_json(j["initial_distribution"], "scenario initial_distribution")
                               : Eigen::VectorXd::Constant(n, 1.0 / n);
  if (j.contains("policy")) d.policy = TransferPolicy(vector_from_json(j["policy"], "scenario policy"));

  if (j.contains("confidence")) {
    const json& c = j["confidence"];
    require_object(c, "confidence", {"alpha", "level"});
    d.confidence.alpha = vector_from_json(required(c, "alpha", "confidence"), "scenario confidence.alpha");
    optional_field(c, "level", d.confidence.level, [](const json& v) { return get_number(v, "confidence.level"); });
  } else if (n == 10) {
    d.confidence = published_confidence();
  } else {
    throw ValidationError("scenario: missing required field 'confidence' (only ten-score models have default radii)");
  }

  const json& nmf = required(j, "nmf", "<root>");
  require_object(nmf, "nmf", {"rank", "starts", "iters", "tol"});
  d.nmf.rank = static_cast<int>(get_integer(required(nmf, "rank", "nmf"), "nmf.rank"));
  optional_field(nmf, "starts", d.nmf.starts, [](const json& v) { return static_cast<int>(get_integer(v, "nmf.starts")); });
  optional_field(nmf, "iters", d.nmf.iters, [](const json& v) { return static_cast<int>(get_integer(v, "nmf.iters")); });
  optional_field(nmf, "tol", d.nmf.tol, [](const json& v) { return get_number(v, "nmf.tol"); });

  if (j.contains("uncertainty")) {
    const json& u = j["uncertainty"];
    require_object(u, "uncertainty", {"families", "emp_samples", "factor_model"});
    if (u.contains("families")) {
      if (!u["families"].is_array()) throw ValidationError("scenario: uncertainty.families must be an array");
      d.uncertainty.families.clear();
      for (const json& f : u["families"]) {
        if (!f.is_string()) throw ValidationError("scenario: uncertainty.families entries must be strings");
        d.uncertainty.families.push_back(parse_family(f.get<std::string>()));
      }
    }
    optional_field(u, "emp_samples", d.uncertainty.emp_samples,
                   [](const json& v) { return static_cast<int>(get_integer(v, "uncertainty.emp_samples")); });
    if (u.contains("factor_model")) d.uncertainty.factor_model = factor_model_from_json(u["factor_model"]);
  }

  if (j.contains("hospital")) {
    const json& h = j["hospital"];
    require_object(h, "hospital", {"ward_load", "direct_load", "icu_capacity", "target_occupancy", "regimes", "overrides"});
    optional_field(h, "ward_load", d.hospital.ward_load, [](const json& v) { return get_number(v, "hospital.ward_load"); });
    optional_field(h, "direct_load", d.hospital.direct_load,
                   [](const json& v) { return get_number(v, "hospital.direct_load"); });
    if (h.contains("icu_capacity")) {
      const json& c = h["icu_capacity"];
      if (c.is_string() && c.get<std::string>() == "auto") {
        d.hospital.icu_capacity.reset();
      } else {
        d.hospital.icu_capacity = static_cast<int>(get_integer(c, "hospital.icu_capacity"));
      }
    }
    optional_field(h, "target_occupancy", d.hospital.target_occupancy,
                   [](const json& v) { return get_number(v, "hospital.target_occupancy"); });
    if (h.contains("regimes")) {
      if (!h["regimes"].is_array()) throw ValidationError("scenario: hospital.regimes must be an array");
      d.hospital.regimes.clear();
      for (const json& g : h["regimes"]) {
        if (!g.is_string()) throw ValidationError("scenario: hospital.regimes entries must be strings");
        d.hospital.regimes.push_back(parse_regime(g.get<std::string>()));
      }
    }
    if (h.contains("overrides")) {
      if (!h["overrides"].is_object()) throw ValidationError("scenario: hospital.overrides must be an object");
      for (const auto& [key, value] : h["overrides"].items()) {
        d.hospital.overrides[key] = get_number(value, "hospital.overrides." + key);
      }
    }
  }

  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    require_object(s, "simulation", {"horizon", "warmup", "reps"});
    optional_field(s, "horizon", d.simulation.horizon, [](const json& v) { return get_integer(v, "simulation.horizon"); });
    optional_field(s, "warmup", d.simulation.warmup, [](const json& v) { return get_integer(v, "simulation.warmup"); });
    optional_field(s, "reps", d.simulation.reps,
                   [](const json& v) { return static_cast<int>(get_integer(v, "simulation.reps")); });
  }

  if (j.contains("thresholds")) {
    if (!j["thresholds"].is_array()) throw ValidationError("scenario: thresholds must be an array");
    for (const json& t : j["thresholds"]) d.thresholds.push_back(static_cast<int>(get_integer(t, "thresholds[]")));
  } else {
    for (int tau = n + 1; tau >= 1; --tau) d.thresholds.push_back(tau);
  }

  if (j.contains("seeds")) {
    const json& s = j["seeds"];
    require_object(s, "seeds", {"nmf", "bootstrap", "simulation", "sampling"});
    optional_field(s, "nmf", d.seeds.nmf, [](const json& v) { return get_seed(v, "seeds.nmf"); });
    optional_field(s, "bootstrap", d.seeds.bootstrap, [](const json& v) { return get_seed(v, "seeds.bootstrap"); });
    optional_field(s, "simulation", d.seeds.simulation, [](const json& v) { return get_seed(v, "seeds.simulation"); });
    optional_field(s, "sampling", d.seeds.sampling, [](const json& v) { return get_seed(v, "seeds.sampling"); });
  }

  if (j.contains("sensitivity")) {
    const json& s = j["sensitivity"];
    require_object(s, "sensitivity", {"samples"});
    optional_field(s, "samples", d.sensitivity_samples,
                   [](const json& v) { return static_cast<int>(get_integer(v, "sensitivity.samples")); });
  }

  d.validate();
  return d;
}

json scenario_to_json(const ScenarioDocument& d) {
  json j;
  j["version"] = d.version;
  j["name"] = d.name;
  j["kernel"] = matrix_to_json(d.kernel.matrix());
  j["rewards"] = d.reward_spec ? reward_spec_to_json(*d.reward_spec) : mdp_rewards_to_json(d.rewards);
  j["initial_distribution"] = vector_to_json(d.initial_distribution);
  if (d.policy) j["policy"] = vector_to_json(d.policy->probs);
  j["confidence"] = {{"alpha", vector_to_json(d.confidence.alpha)}, {"level", d.confidence.level}};
  j["nmf"] = {{"rank", d.nmf.rank}, {"starts", d.nmf.starts}, {"iters", d.nmf.iters}, {"tol", d.nmf.tol}};
  json families = json::array();
  for (SetFamily f : d.uncertainty.families) families.push_back(family_name(f));
  j["uncertainty"] = {{"families", families}, {"emp_samples", d.uncertainty.emp_samples}};
  if (d.uncertainty.factor_model) j["uncertainty"]["factor_model"] = factor_model_to_json(*d.uncertainty.factor_model);
  json regimes = json::array();
  for (DischargeRegime g : d.hospital.regimes) regimes.push_back(regime_name(g));
  j["hospital"] = {{"ward_load", d.hospital.ward_load},
                   {"direct_load", d.hospital.direct_load},
                   {"target_occupancy", d.hospital.target_occupancy},
                   {"regimes", regimes},
                   {"overrides", d.hospital.overrides}};
  j["hospital"]["icu_capacity"] = d.hospital.icu_capacity ? json(*d.hospital.icu_capacity) : json("auto");
  j["simulation"] = {
      {"horizon", d.simulation.horizon}, {"warmup", d.simulation.warmup}, {"reps", d.simulation.reps}};
  j["thresholds"] = d.thresholds;
  j["seeds"] = {{"nmf", d.seeds.nmf},
                {"bootstrap", d.seeds.bootstrap},
                {"simulation", d.seeds.simulation},
                {"sampling", d.seeds.sampling}};
  j["sensitivity"] = {{"samples", d.sensitivity_samples}};
  return j;
}

ScenarioDocument load_scenario(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("scenario " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace icu
