#include "csmc/forward_process.hpp"

#include <cmath>
#include <string>

namespace csmc {

const char* to_string(NoiseKind kind) {
  return kind == NoiseKind::Masked ? "masked" : "uniform";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "masked") return NoiseKind::Masked;
  if (name == "uniform") return NoiseKind::Uniform;
  throw InvalidArgument("unknown noise kind '" + name + "' (expected masked or uniform)");
}

TransitionModel::TransitionModel(NoiseKind kind, NoiseSchedule schedule, Vocabulary vocab)
    : kind_(kind), schedule_(std::move(schedule)), vocab_(std::move(vocab)) {
  if (kind_ == NoiseKind::Masked && !vocab_.has_mask()) {
    throw InvalidArgument("masked transition model requires a vocabulary with a mask token");
  }
  if (kind_ == NoiseKind::Uniform && vocab_.has_mask()) {
    throw InvalidArgument("uniform transition model requires a vocabulary without a mask token");
  }
  const int k = alphabet_size();
  const int steps = num_steps();
  step_matrices_.reserve(static_cast<std::size_t>(steps));
  cumulative_matrices_.reserve(static_cast<std::size_t>(steps) + 1);
  cumulative_matrices_.push_back(Eigen::MatrixXd::Identity(k, k));
  for (int t = 1; t <= steps; ++t) {
    Eigen::MatrixXd q(k, k);
    for (int a = 0; a < k; ++a) {
      for (int b = 0; b < k; ++b) {
        q(a, b) = jump_probability(t - 1, t, a, b);
      }
    }
    cumulative_matrices_.push_back(cumulative_matrices_.back() * q);
    step_matrices_.push_back(std::move(q));
  }
}

void TransitionModel::check_time(int t, int lo) const {
  if (t < lo || t > num_steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(num_steps()) + "]");
  }
}

double TransitionModel::jump_probability(int s, int t, Token from, Token to) const {
  const double keep = schedule_.survival_between(s, t);
  if (kind_ == NoiseKind::Masked) {
    const Token mask = *vocab_.mask_index();
    if (from == mask) return to == mask ? 1.0 : 0.0;
    return (to == from ? keep : 0.0) + (to == mask ? 1.0 - keep : 0.0);
  }
  return (to == from ? keep : 0.0) + (1.0 - keep) / vocab_.size();
}

const Eigen::MatrixXd& TransitionModel::transition_matrix(int t) const {
  check_time(t, 1);
  return step_matrices_[static_cast<std::size_t>(t - 1)];
}

const Eigen::MatrixXd& TransitionModel::cumulative_matrix(int t) const {
  check_time(t, 0);
  return cumulative_matrices_[static_cast<std::size_t>(t)];
}

CategoricalDist TransitionModel::marginal(Token x0, int t) const {
  check_time(t, 0);
  if (x0 < 0 || x0 >= vocab_.size()) {
    throw InvalidArgument("marginal needs a clean token, got " + std::to_string(x0));
  }
  std::vector<double> probs(static_cast<std::size_t>(alphabet_size()));
  for (int b = 0; b < alphabet_size(); ++b) {
    probs[static_cast<std::size_t>(b)] = jump_probability(0, t, x0, b);
  }
  return CategoricalDist(std::move(probs));
}

Sequence TransitionModel::corrupt(const Sequence& x0, int t, Rng& rng) const {
  check_time(t, 0);
  vocab_.check(x0, true);
  Sequence xt(x0.size());
  const double keep = schedule_.alpha_bar(t);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    // Two-stage draw: survive with alpha_bar, else sample the noise target.
    if (rng.uniform() < keep) {
      xt[i] = x0[i];
    } else if (kind_ == NoiseKind::Masked) {
      xt[i] = *vocab_.mask_index();
    } else {
      xt[i] = static_cast<Token>(rng.below(static_cast<std::uint64_t>(vocab_.size())));
    }
  }
  return xt;
}

void TransitionModel::posterior_between(Token xt, Token x0, int t, int s, std::span<double> out) const {
  check_time(t, 1);
  if (s < 0 || s >= t) {
    throw InvalidArgument("posterior target time " + std::to_string(s) + " must lie in [0, " +
                          std::to_string(t) + ")");
  }
  if (x0 < 0 || x0 >= vocab_.size()) {
    throw InvalidArgument("posterior needs a clean x0 token, got " + std::to_string(x0));
  }
  if (!vocab_.is_valid(xt)) {
    throw InvalidArgument("posterior got invalid x_t token " + std::to_string(xt));
  }
  const int k = alphabet_size();
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    const double w = jump_probability(s, t, c, xt) * jump_probability(0, s, x0, c);
    out[static_cast<std::size_t>(c)] = w;
    total += w;
  }
  if (!(total > 0.0)) {
    throw ImpossibleObservation("x_t token " + std::to_string(xt) + " at t=" + std::to_string(t) +
                                " has zero probability given x_0 token " + std::to_string(x0));
  }
  for (int c = 0; c < k; ++c) {
    out[static_cast<std::size_t>(c)] /= total;
  }
}

CategoricalDist TransitionModel::posterior_between(Token xt, Token x0, int t, int s) const {
  std::vector<double> probs(static_cast<std::size_t>(alphabet_size()));
  posterior_between(xt, x0, t, s, probs);
  return CategoricalDist(std::move(probs));
}

CategoricalDist TransitionModel::posterior(Token xt, Token x0, int t) const {
  return posterior_between(xt, x0, t, t - 1);
}

Sequence TransitionModel::sample_prior(int length, Rng& rng) const {
  Sequence x(static_cast<std::size_t>(length));
  for (auto& tok : x) {
    tok = kind_ == NoiseKind::Masked
              ? *vocab_.mask_index()
              : static_cast<Token>(rng.below(static_cast<std::uint64_t>(vocab_.size())));
  }
  return x;
}

double TransitionModel::sequence_likelihood(const Sequence& x0, const Sequence& xt, int t) const {
  double p = 1.0;
  for (std::size_t i = 0; i < x0.size() && p > 0.0; ++i) {
    p *= jump_probability(0, t, x0[i], xt[i]);
  }
  return p;
}

}  // namespace csmc
