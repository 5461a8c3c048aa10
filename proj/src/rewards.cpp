#include "icu/rewards.hpp"

#include <cmath>
#include <string>

#include "icu/errors.hpp"

namespace icu {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("rewards: " + what);
}

}  // namespace

void RewardSpec::validate() const {
  for (double x : {r_W, r_RL, r_D, r_PT_RL, r_PT_D, r_CR_RL, r_CR_D, d_A, d_C, lambda}) {
    require(std::isfinite(x), "non-finite value");
  }
  require(lambda > 0.0 && lambda < 1.0, "discount must lie in (0, 1)");
  require(d_A >= 0.0 && d_A <= 1.0, "d_A must lie in [0, 1]");
  require(d_C >= 0.0 && d_C <= 1.0, "d_C must lie in [0, 1]");
  require(r_RL >= r_PT_RL, "r_RL >= r_PT_RL violated");
  require(r_PT_RL >= r_CR_RL, "r_PT_RL >= r_CR_RL violated");
  require(r_CR_RL >= r_D, "r_CR_RL >= r_D violated");
  require(r_D >= r_CR_D, "r_D >= r_CR_D violated");
  require(r_CR_D >= r_PT_D, "r_CR_D >= r_PT_D violated");
}

RewardSpec RewardSpec::experiment_default() {
  RewardSpec s;
  s.r_W = 100.0;
  s.r_RL = 250.0 / (1.0 - 0.95);
  s.r_PT_RL = 190.0 / (1.0 - 0.95);
  s.r_CR_RL = 160.0 / (1.0 - 0.95);
  s.r_D = 30.0 / (1.0 - 0.95);
  s.r_CR_D = 20.0 / (1.0 - 0.95);
  s.r_PT_D = 10.0 / (1.0 - 0.95);
  s.d_A = 0.0009;
  s.d_C = 0.4761;
  s.lambda = 0.95;
  return s;
}

std::pair<double, double> derive_composite_rewards(const RewardSpec& spec) {
  spec.validate();
  return {spec.r_PT(), spec.r_CR()};
}

MdpRewards::MdpRewards(double r_w, double r_cr, double r_rl, double r_d, double r_pt, double lam)
    : r_W(r_w), r_CR(r_cr), r_RL(r_rl), r_D(r_d), r_PT(r_pt), lambda(lam) {}

MdpRewards::MdpRewards(const RewardSpec& spec)
    : r_W(spec.r_W), r_CR(spec.r_CR()), r_RL(spec.r_RL), r_D(spec.r_D), r_PT(spec.r_PT()), lambda(spec.lambda) {
  spec.validate();
}

MdpRewards MdpRewards::with_r_pt(double r_pt) const {
  MdpRewards out = *this;
  out.r_PT = r_pt;
  return out;
}

MdpRewards MdpRewards::scaled(double alpha) const {
  return {alpha * r_W, alpha * r_CR, alpha * r_RL, alpha * r_D, alpha * r_PT, lambda};
}

MdpRewards MdpRewards::translated(double alpha) const {
  return {r_W + alpha, r_CR + alpha, r_RL + alpha, r_D + alpha, r_PT + alpha, lambda};
}

double MdpRewards::transfer_ratio() const { return (r_W + lambda * r_PT) / (r_W + lambda * r_RL); }

void MdpRewards::validate() const {
  for (double x : {r_W, r_CR, r_RL, r_D, r_PT, lambda}) require(std::isfinite(x), "non-finite value");
  require(lambda > 0.0 && lambda < 1.0, "discount must lie in (0, 1)");
}

}  // namespace icu
