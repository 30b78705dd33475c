#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csmc {

using Token = std::int32_t;

/// A fixed-length vector of token indices. Clean sequences (x_0) hold no mask token.
using Sequence = std::vector<Token>;

/// Raised when a caller violates a precondition (bad arguments, malformed input).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a query is inconsistent with the forward process, e.g. an
/// observation that has zero probability under every clean sequence.
class ImpossibleObservation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Vocabulary {
 public:
  /// `size` non-mask tokens. When `masked` is set the mask token is appended at index `size`.
  Vocabulary(int size, bool masked, std::map<Token, std::string> glyphs = {});

  int size() const { return size_; }
  std::optional<Token> mask_index() const { return mask_index_; }
  bool has_mask() const { return mask_index_.has_value(); }
  /// Number of distinct token values a noisy sequence can hold (V, or V+1 with a mask).
  int alphabet_size() const { return has_mask() ? size_ + 1 : size_; }

  bool is_mask(Token t) const { return mask_index_ && *mask_index_ == t; }
  bool is_valid(Token t) const { return (t >= 0 && t < size_) || is_mask(t); }
  bool is_clean(const Sequence& x) const;
  /// Throws InvalidArgument unless every token is valid (and, if `clean`, unmasked).
  void check(const Sequence& x, bool clean) const;

  const std::map<Token, std::string>& glyphs() const { return glyphs_; }
  /// Concatenates glyphs; tokens without a glyph render as their decimal index in brackets.
  std::string decode(const Sequence& x) const;
  /// Inverse of decode for single-character glyph maps.
  Sequence encode(const std::string& text) const;

 private:
  int size_;
  std::optional<Token> mask_index_;
  std::map<Token, std::string> glyphs_;
};

/// Survival probabilities alpha_bar[t] for t = 0..T.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> alpha_bar);

  int num_steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  /// Per-step survival ratio alpha_bar[t] / alpha_bar[t-1].
  double step_survival(int t) const;
  /// Survival between two times s < t: alpha_bar[t] / alpha_bar[s].
  double survival_between(int s, int t) const;
  const std::vector<double>& values() const { return alpha_bar_; }

 private:
  std::vector<double> alpha_bar_;
};

/// alpha_bar[t] = 1 - t/T with the terminal value pinned to exactly zero.
NoiseSchedule build_linear_schedule(int num_steps);

class CategoricalDist {
 public:
  explicit CategoricalDist(std::vector<double> probs);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  std::vector<double> probs_;
};

/// Seeded random stream. Each (seed, stream) pair gives an independent,
/// bit-reproducible sequence, so every chain or worker can own one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

std::size_t sample_categorical(const CategoricalDist& dist, Rng& rng);

/// Inverse-CDF draw from non-negative, possibly unnormalized weights.
/// Throws InvalidArgument on an all-zero, negative, or non-finite vector.
std::size_t sample_weighted(std::span<const double> weights, Rng& rng);

std::string format_sequence(const Sequence& x);

}  // namespace csmc
