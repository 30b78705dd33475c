#include "csmc/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "csmc/csmc_sampler.hpp"
#include "csmc/reverse_sampler.hpp"

namespace csmc {

namespace {

constexpr double kProportionalFloor = 1e-12;

std::size_t select_index(std::span<const double> rewards, const BaselineConfig& config, Rng& rng, int& fallbacks) {
  const auto weights = selection_weights(rewards, config.beta, config.rule);
  if (weights.empty()) {
    ++fallbacks;
    return static_cast<std::size_t>(rng.below(rewards.size()));
  }
  return sample_weighted(weights, rng);
}

}  // namespace

const char* to_string(ResampleRule rule) {
  return rule == ResampleRule::Exponential ? "exponential" : "proportional";
}

ResampleRule parse_resample_rule(const std::string& name) {
  if (name == "exponential") return ResampleRule::Exponential;
  if (name == "proportional") return ResampleRule::Proportional;
  throw InvalidArgument("unknown resample rule '" + name + "' (expected exponential or proportional)");
}

void BaselineConfig::validate() const {
  if (n < 1) throw InvalidArgument("baseline n must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("baseline beta must be positive");
}

double intermediate_reward(const Denoiser& denoiser, const RewardFn& reward, const Sequence& xt, int t, Rng& rng) {
  if (t == 0) return evaluate_reward(reward, xt);
  return evaluate_reward(reward, sample_x0_prediction(denoiser, xt, t, rng));
}

std::vector<double> selection_weights(std::span<const double> rewards, double beta, ResampleRule rule) {
  std::vector<double> w(rewards.size());
  if (rewards.empty()) return w;
  if (rule == ResampleRule::Exponential) {
    const double top = *std::max_element(rewards.begin(), rewards.end());
    for (std::size_t i = 0; i < rewards.size(); ++i) w[i] = std::exp((rewards[i] - top) / beta);
  } else {
    const double low = *std::min_element(rewards.begin(), rewards.end());
    for (std::size_t i = 0; i < rewards.size(); ++i) w[i] = std::max(rewards[i] - low, kProportionalFloor);
  }
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0) || !std::isfinite(total)) return {};
  for (double& x : w) x /= total;
  return w;
}

BestOfNResult best_of_n(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length,
                        Rng& rng) {
  config.validate();
  BestOfNResult result;
  for (int i = 0; i < config.n; ++i) {
    Sequence x = generate(denoiser, length, rng);
    const double r = evaluate_reward(reward, x);
    result.candidate_rewards.push_back(r);
    if (i == 0 || r > result.best_reward) {
      result.best = std::move(x);
      result.best_reward = r;
    }
  }
  return result;
}

SmcResult smc(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length, Rng& rng) {
  config.validate();
  if (config.n < 2) throw InvalidArgument("SMC needs at least 2 particles");
  const TransitionModel& model = denoiser.model();
  const auto n = static_cast<std::size_t>(config.n);
  SmcResult result;
  std::vector<Sequence> particles(n);
  for (auto& p : particles) p = model.sample_prior(length, rng);

  std::vector<double> rewards(n);
  for (int t = model.num_steps(); t >= 1; --t) {
    for (std::size_t i = 0; i < n; ++i) {
      particles[i] = denoise_step(denoiser, particles[i], t, rng);
      rewards[i] = intermediate_reward(denoiser, reward, particles[i], t - 1, rng);
    }
    std::vector<Sequence> next(n);
    std::vector<double> next_rewards(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = select_index(rewards, config, rng, result.uniform_fallbacks);
      next[i] = particles[j];
      next_rewards[i] = rewards[j];
    }
    particles = std::move(next);
    rewards = std::move(next_rewards);
  }
  result.particles = std::move(particles);
  // After the final step the weights were clean rewards.
  result.rewards = std::move(rewards);
  return result;
}

SvddResult svdd(const BaselineConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length, Rng& rng) {
  config.validate();
  if (config.n < 2) throw InvalidArgument("SVDD needs at least 2 candidates per step");
  const TransitionModel& model = denoiser.model();
  const auto n = static_cast<std::size_t>(config.n);
  SvddResult result;
  Sequence current = model.sample_prior(length, rng);
  std::vector<Sequence> candidates(n);
  std::vector<double> scores(n);
  for (int t = model.num_steps(); t >= 1; --t) {
    for (std::size_t i = 0; i < n; ++i) {
      candidates[i] = denoise_step(denoiser, current, t, rng);
      scores[i] = intermediate_reward(denoiser, reward, candidates[i], t - 1, rng);
    }
    current = candidates[select_index(scores, config, rng, result.uniform_fallbacks)];
  }
  result.reward = evaluate_reward(reward, current);
  result.sample = std::move(current);
  return result;
}

}  // namespace csmc
