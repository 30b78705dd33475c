#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "csmc/core.hpp"

namespace csmc {

enum class NoiseKind { Masked, Uniform };

const char* to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// Per-token forward corruption. Masked models move surviving mass onto an
/// absorbing mask token; uniform models spread it evenly over the V data tokens.
///
/// Both families share one closed form for the transition between any two
/// times s < t: keep the token with probability alpha_bar[t]/alpha_bar[s],
/// otherwise draw from the noise target. Q_t is the s = t-1 case and the
/// cumulative matrix Q̄_t is built by explicit products at construction.
class TransitionModel {
 public:
  TransitionModel(NoiseKind kind, NoiseSchedule schedule, Vocabulary vocab);

  NoiseKind kind() const { return kind_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  const Vocabulary& vocab() const { return vocab_; }
  int num_steps() const { return schedule_.num_steps(); }
  int alphabet_size() const { return vocab_.alphabet_size(); }

  /// Probability that token `from` at time s becomes `to` at time t (s <= t).
  double jump_probability(int s, int t, Token from, Token to) const;

  /// Q_t, for 1 <= t <= T. Row-stochastic, alphabet_size square.
  const Eigen::MatrixXd& transition_matrix(int t) const;
  /// Q̄_t = Q_1 ... Q_t, for 0 <= t <= T (Q̄_0 = I).
  const Eigen::MatrixXd& cumulative_matrix(int t) const;

  /// p_t(. | x0) for a single clean token, in closed form.
  CategoricalDist marginal(Token x0, int t) const;

  /// Independent per-position draw from the marginal at time t.
  Sequence corrupt(const Sequence& x0, int t, Rng& rng) const;

  /// q(x_{t-1} | x_t, x_0) for a single position.
  CategoricalDist posterior(Token xt, Token x0, int t) const;
  /// q(x_s | x_t, x_0) for s < t. Writes alphabet_size unnormalized-then-normalized
  /// weights into `out`. Throws ImpossibleObservation when x_t cannot follow x_0.
  void posterior_between(Token xt, Token x0, int t, int s, std::span<double> out) const;
  CategoricalDist posterior_between(Token xt, Token x0, int t, int s) const;

  /// Prior over x_T: all-mask for masked models, i.i.d. uniform otherwise.
  Sequence sample_prior(int length, Rng& rng) const;

  /// prod_i p_t(x_t[i] | x_0[i]).
  double sequence_likelihood(const Sequence& x0, const Sequence& xt, int t) const;

 private:
  void check_time(int t, int lo) const;

  NoiseKind kind_;
  NoiseSchedule schedule_;
  Vocabulary vocab_;
  std::vector<Eigen::MatrixXd> step_matrices_;
  std::vector<Eigen::MatrixXd> cumulative_matrices_;
};

}  // namespace csmc
