#include "csmc/csmc_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "csmc/parallel.hpp"
#include "csmc/reverse_sampler.hpp"

namespace csmc {

void CsmcConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("beta must be a positive finite number");
  }
  if (!(t_lo > 0.0 && t_lo <= t_hi && t_hi <= 1.0)) {
    throw InvalidArgument("proposal times must satisfy 0 < t_lo <= t_hi <= 1");
  }
  if (reverse_steps < 1) throw InvalidArgument("reverse_steps (M) must be >= 1");
  if (iterations < 0) throw InvalidArgument("iterations (K) must be >= 0");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw InvalidArgument("burn_in_fraction must lie in [0, 1)");
  }
  if (num_samples < 1) throw InvalidArgument("num_samples (S) must be >= 1");
  if (batch < 1) throw InvalidArgument("batch (B) must be >= 1");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

double Acceptance::alpha() const {
  return std::exp(log_alpha);
}

int sample_proposal_time(const CsmcConfig& config, int num_steps, Rng& rng) {
  const double u = config.t_lo == config.t_hi ? config.t_lo : rng.uniform(config.t_lo, config.t_hi);
  const auto t = static_cast<int>(std::lround(u * num_steps));
  return std::clamp(t, 1, num_steps);
}

std::vector<double> proposal_time_weights(const CsmcConfig& config, int num_steps) {
  config.validate();
  std::vector<double> weights(static_cast<std::size_t>(num_steps) + 1, 0.0);
  const double lo = config.t_lo * num_steps;
  const double hi = config.t_hi * num_steps;
  if (lo == hi) {
    weights[static_cast<std::size_t>(std::clamp(static_cast<int>(std::lround(lo)), 1, num_steps))] = 1.0;
    return weights;
  }
  for (int t = 0; t <= num_steps; ++t) {
    const double overlap = std::min(hi, t + 0.5) - std::max(lo, t - 0.5);
    if (overlap > 0.0) weights[static_cast<std::size_t>(t)] = overlap / (hi - lo);
  }
  weights[1] += weights[0];
  weights[0] = 0.0;
  return weights;
}

std::pair<Sequence, int> propose(const CsmcConfig& config, const Denoiser& denoiser, const Sequence& x0, Rng& rng) {
  const TransitionModel& model = denoiser.model();
  const int t = sample_proposal_time(config, model.num_steps(), rng);
  const Sequence xt = model.corrupt(x0, t, rng);
  return {partial_reverse(denoiser, xt, t, config.reverse_steps, rng), t};
}

Acceptance acceptance(double r_new, double r_old, double beta) {
  if (!std::isfinite(r_new) || !std::isfinite(r_old)) {
    throw InvalidArgument("acceptance needs finite rewards");
  }
  if (!(beta > 0.0)) {
    throw InvalidArgument("acceptance needs beta > 0");
  }
  Acceptance a;
  a.log_alpha = (r_new - r_old) / beta;
  a.probability = a.log_alpha >= 0.0 ? 1.0 : std::exp(a.log_alpha);
  return a;
}

double evaluate_reward(const RewardFn& reward, const Sequence& x) {
  double r = 0.0;
  try {
    r = reward(x);
  } catch (const std::exception& e) {
    throw RewardEvaluationError("reward '" + reward.name() + "' failed on sequence [" + format_sequence(x) +
                                "]: " + e.what());
  }
  if (!std::isfinite(r)) {
    throw RewardEvaluationError("reward '" + reward.name() + "' returned a non-finite value on sequence [" +
                                format_sequence(x) + "]");
  }
  return r;
}

ChainResult run_chain(const CsmcConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length,
                      Rng& rng) {
  config.validate();
  ChainResult chain;
  const auto k = static_cast<std::size_t>(config.iterations);
  chain.states.reserve(k + 1);
  chain.rewards.reserve(k + 1);
  chain.proposals.reserve(k);

  Sequence current = generate(denoiser, length, rng);
  double current_reward = evaluate_reward(reward, current);
  chain.states.push_back(current);
  chain.rewards.push_back(current_reward);

  for (std::size_t i = 0; i < k; ++i) {
    auto [candidate, t] = propose(config, denoiser, current, rng);
    const double candidate_reward = evaluate_reward(reward, candidate);
    const Acceptance a = acceptance(candidate_reward, current_reward, config.beta);
    const bool accepted = rng.uniform() < a.probability;
    if (accepted) {
      current = candidate;
      current_reward = candidate_reward;
    }
    chain.proposals.push_back({std::move(candidate), t, candidate_reward, a.probability, accepted});
    chain.states.push_back(current);
    chain.rewards.push_back(current_reward);
  }
  return chain;
}

std::vector<std::size_t> sample_indices(std::size_t num_states, int count, double burn_in_fraction) {
  if (count < 1) {
    throw InvalidArgument("sample count must be >= 1");
  }
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
    throw InvalidArgument("burn_in_fraction must lie in [0, 1)");
  }
  const auto burn = static_cast<std::size_t>(std::ceil(burn_in_fraction * static_cast<double>(num_states)));
  const std::size_t retained = num_states > burn ? num_states - burn : 0;
  if (static_cast<std::size_t>(count) > retained) {
    throw InvalidArgument("requested " + std::to_string(count) + " samples but only " + std::to_string(retained) +
                          " states remain after burn-in");
  }
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    idx.push_back(num_states - 1);
    return idx;
  }
  const auto gaps = static_cast<std::size_t>(count - 1);
  for (std::size_t j = 0; j <= gaps; ++j) {
    idx.push_back(burn + j * (retained - 1) / gaps);
  }
  return idx;
}

std::vector<Sequence> draw_samples(const ChainResult& chain, int count, double burn_in_fraction) {
  std::vector<Sequence> out;
  for (std::size_t i : sample_indices(chain.states.size(), count, burn_in_fraction)) {
    out.push_back(chain.states[i]);
  }
  return out;
}

int iterations_per_chain(int total, int batch) {
  if (batch == 1) return total;
  return std::max(1, total / batch);
}

BatchedResult run_batched(const CsmcConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length) {
  config.validate();
  const auto b = static_cast<std::size_t>(config.batch);
  CsmcConfig per_chain = config;
  per_chain.iterations = iterations_per_chain(config.iterations, config.batch);

  std::vector<int> counts(b);
  for (std::size_t i = 0; i < b; ++i) {
    counts[i] = config.num_samples / config.batch + (i < static_cast<std::size_t>(config.num_samples % config.batch));
  }
  // Fail before doing any work if the retained states cannot cover the request.
  const auto states = static_cast<std::size_t>(per_chain.iterations) + 1;
  const auto burn = static_cast<std::size_t>(std::ceil(config.burn_in_fraction * static_cast<double>(states)));
  if (static_cast<std::size_t>(counts[0]) > states - std::min(states, burn)) {
    throw InvalidArgument("num_samples " + std::to_string(config.num_samples) + " exceeds the " +
                          std::to_string(states - std::min(states, burn)) +
                          " post-burn-in states available per chain across " + std::to_string(b) + " chains");
  }

  BatchedResult result;
  result.chains.resize(b);
  std::vector<std::vector<Sequence>> per_chain_samples(b);
  parallel_for(b, config.threads, [&](std::size_t i) {
    Rng rng(config.seed, i);
    result.chains[i] = run_chain(per_chain, denoiser, reward, length, rng);
    if (counts[i] > 0) {
      per_chain_samples[i] = draw_samples(result.chains[i], counts[i], config.burn_in_fraction);
    }
  });
  for (auto& s : per_chain_samples) {
    result.samples.insert(result.samples.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return result;
}

}  // namespace csmc
