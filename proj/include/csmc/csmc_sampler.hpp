#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "csmc/core.hpp"
#include "csmc/denoiser.hpp"
#include "csmc/rewards.hpp"

namespace csmc {

/// Knobs of the clean-sample Metropolis-Hastings chain.
struct CsmcConfig {
  double beta = 0.02;
  /// Proposal noise level range, as fractions of T.
  double t_lo = 0.2;
  double t_hi = 0.5;
  /// Reverse steps per proposal (M).
  int reverse_steps = 5;
  /// MH iterations (K). For batched runs this is the total across chains.
  int iterations = 1000;
  double burn_in_fraction = 0.5;
  /// Samples to report (S).
  int num_samples = 1;
  /// Independent chains (B).
  int batch = 1;
  std::uint64_t seed = 0;
  /// Worker threads for batched chains; results do not depend on it.
  int threads = 1;

  void validate() const;
};

struct Proposal {
  Sequence sequence;
  int t = 0;
  double reward = 0.0;
  double accept_probability = 0.0;
  bool accepted = false;
};

/// The recorded chain. states[k+1] is proposals[k].sequence when accepted,
/// else states[k]; rewards[k] is the cached reward of states[k].
struct ChainResult {
  std::vector<Sequence> states;
  std::vector<double> rewards;
  std::vector<Proposal> proposals;
};

struct Acceptance {
  double log_alpha = 0.0;
  /// A = min(1, alpha).
  double probability = 1.0;
  double alpha() const;
};

/// A reward call failed or returned a non-finite value.
class RewardEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps u ~ U(t_lo, t_hi) to round(u * T), clamped to [1, T].
int sample_proposal_time(const CsmcConfig& config, int num_steps, Rng& rng);

/// Exact law of sample_proposal_time: weights[t] for t = 0..T (weights[0] = 0).
std::vector<double> proposal_time_weights(const CsmcConfig& config, int num_steps);

/// Forward-backward proposal: corrupt x0 to a random time t, then M-step reverse.
std::pair<Sequence, int> propose(const CsmcConfig& config, const Denoiser& denoiser, const Sequence& x0, Rng& rng);

/// alpha = exp((r_new - r_old) / beta), evaluated in log space.
Acceptance acceptance(double r_new, double r_old, double beta);

/// Evaluates `reward` on `x`, wrapping failures with the offending sequence.
double evaluate_reward(const RewardFn& reward, const Sequence& x);

/// Initial sample from the full reverse process, then config.iterations MH steps.
ChainResult run_chain(const CsmcConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length,
                      Rng& rng);

/// Indices kept after burn-in, thinned to `count` evenly spaced states
/// (first and last kept when count >= 2; count == 1 keeps the final state).
std::vector<std::size_t> sample_indices(std::size_t num_states, int count, double burn_in_fraction);

std::vector<Sequence> draw_samples(const ChainResult& chain, int count, double burn_in_fraction);

struct BatchedResult {
  std::vector<ChainResult> chains;
  std::vector<Sequence> samples;
};

/// Iterations per chain when `total` iterations are split over `batch` chains.
int iterations_per_chain(int total, int batch);

/// B independent chains with streams keyed (seed, chain id), K/B iterations
/// each, S split evenly with the remainder going to the first chains.
BatchedResult run_batched(const CsmcConfig& config, const Denoiser& denoiser, const RewardFn& reward, int length);

}  // namespace csmc
