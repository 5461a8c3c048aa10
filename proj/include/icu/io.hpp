#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "icu/estimation.hpp"
#include "icu/kernel.hpp"
#include "icu/rewards.hpp"
#include "icu/simulator.hpp"
#include "icu/uncertainty.hpp"

namespace icu {

/**
 * Kernel CSV: line 1 holds n, line 2 the column labels S1..Sn,CR,RL,D, line 3 the row labels
 * S1..Sn, followed by n rows of n+3 probabilities. Errors name the offending line.
 */
std::string kernel_to_csv(const TransitionKernel& kernel);
TransitionKernel kernel_from_csv(std::istream& in);

/// Plain numeric CSV with a header row of column labels.
std::string matrix_to_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& columns);

/**
 * Trajectory CSV with header id,period,state; one row per (hospitalization, period) with state
 * labels S1..Sn, CR, RL, D. Rows of one hospitalization are contiguous with periods 0, 1, 2, ...
 * The score count is the largest score label seen unless `n` is given.
 */
TrajectorySet trajectories_from_csv(std::istream& in, int n = 0);
void trajectories_to_csv(std::ostream& out, const TrajectorySet& data);

/// One JSON object per line with time, patient, kind and value.
void write_event_log(std::ostream& out, const std::vector<SimEvent>& log);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);
nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json reward_spec_to_json(const RewardSpec& s);
RewardSpec reward_spec_from_json(const nlohmann::json& j);
nlohmann::json mdp_rewards_to_json(const MdpRewards& r);
MdpRewards mdp_rewards_from_json(const nlohmann::json& j);

/// {"u": [[..]], "w": [[..]], "lower": [[..]], "upper": [[..]]} with one column of W and of each bound per factor.
nlohmann::json factor_model_to_json(const FactorModel& model);
FactorModel factor_model_from_json(const nlohmann::json& j);

/// Writes `text` to `path`, creating parent directories; throws `ValidationError` on failure.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace icu
