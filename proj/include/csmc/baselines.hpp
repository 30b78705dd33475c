#pragma once

#include <span>
#include <string>
#include <vector>

#include "csmc/core.hpp"
#include "csmc/denoiser.hpp"
#include "csmc/rewards.hpp"

namespace csmc {

/// How SMC and SVDD turn intermediate rewards into selection weights.
enum class ResampleRule {
  /// w ∝ exp(r / beta)
  Exponential,
  /// w ∝ max(r - min r, 1e-12)
  Proportional,
};

const char* to_string(ResampleRule rule);
ResampleRule parse_resample_rule(const std::string& name);

struct BaselineConfig {
  /// BoN samples, SMC particles, or SVDD candidates per step.
  int n = 16;
  double beta = 0.02;
  ResampleRule rule = ResampleRule::Exponential;

  void validate() const;
};

/// r(x̂_0(x_t)) with x̂_0 drawn from the denoiser; r(x_t) itself when t == 0.
double intermediate_reward(const Denoiser& denoiser, const RewardFn& reward, const Sequence& xt, int t, Rng& rng);

/// Normalized selection weights. Returns an empty vector when the weights
/// degenerate (all zero or non-finite); callers then resample uniformly.
std::vector<double> selection_weights(std::span<const double> rewards, double beta, ResampleRule rule);

struct BestOfNResult {
  Sequence best;
  double best_reward = 0.0;
  std::vector<double> candidate_rewards;
};

/// n independent generations; the highest reward wins, earliest index on ties.
BestOfNResult best_of_n(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length,
                        Rng& rng);

struct SmcResult {
  std::vector<Sequence> particles;
  std::vector<double> rewards;
  /// Steps whose weights degenerated and fell back to uniform resampling.
  int uniform_fallbacks = 0;
};

/// n particles from the prior; every step denoises each particle, weights it
/// by its intermediate reward, and multinomially resamples n particles.
SmcResult smc(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length, Rng& rng);

struct SvddResult {
  Sequence sample;
  double reward = 0.0;
  int uniform_fallbacks = 0;
};

/// One trajectory; each step draws n candidate x_{t-1} and keeps one, chosen
/// by weights over their intermediate rewards.
SvddResult svdd(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length, Rng& rng);

}  // namespace csmc
