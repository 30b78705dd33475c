#include "csmc/core.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace csmc {

Vocabulary::Vocabulary(int size, bool masked, std::map<Token, std::string> glyphs)
    : size_(size), glyphs_(std::move(glyphs)) {
  if (size < 2) {
    throw InvalidArgument("vocabulary needs at least 2 tokens, got " + std::to_string(size));
  }
  if (masked) {
    mask_index_ = static_cast<Token>(size);
  }
  std::set<std::string> seen;
  for (const auto& [token, glyph] : glyphs_) {
    if (!is_valid(token)) {
      throw InvalidArgument("glyph assigned to out-of-range token " + std::to_string(token));
    }
    if (!seen.insert(glyph).second) {
      throw InvalidArgument("glyph '" + glyph + "' assigned to more than one token");
    }
  }
}

bool Vocabulary::is_clean(const Sequence& x) const {
  for (Token t : x) {
    if (t < 0 || t >= size_) return false;
  }
  return true;
}

void Vocabulary::check(const Sequence& x, bool clean) const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Token t = x[i];
    if (!is_valid(t) || (clean && is_mask(t))) {
      throw InvalidArgument("token " + std::to_string(t) + " at position " + std::to_string(i) +
                            " is not valid in " + (clean ? "a clean" : "this") + " sequence " +
                            format_sequence(x));
    }
  }
}

std::string Vocabulary::decode(const Sequence& x) const {
  std::string out;
  for (Token t : x) {
    auto it = glyphs_.find(t);
    if (it != glyphs_.end()) {
      out += it->second;
    } else {
      out += "[" + std::to_string(t) + "]";
    }
  }
  return out;
}

Sequence Vocabulary::encode(const std::string& text) const {
  std::map<char, Token> lookup;
  for (const auto& [token, glyph] : glyphs_) {
    if (glyph.size() != 1) {
      throw InvalidArgument("encode requires single-character glyphs");
    }
    lookup[glyph[0]] = token;
  }
  Sequence out;
  out.reserve(text.size());
  for (char c : text) {
    auto it = lookup.find(c);
    if (it == lookup.end()) {
      throw InvalidArgument(std::string("no token for glyph '") + c + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() < 2) {
    throw InvalidArgument("noise schedule needs at least one step");
  }
  if (alpha_bar_.front() != 1.0) {
    throw InvalidArgument("noise schedule must start at alpha_bar = 1");
  }
  if (alpha_bar_.back() > 1e-6 || alpha_bar_.back() < 0.0) {
    throw InvalidArgument("noise schedule must end fully noised (alpha_bar_T <= 1e-6)");
  }
  for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
    if (!(alpha_bar_[t - 1] > alpha_bar_[t])) {
      throw InvalidArgument("noise schedule must be strictly decreasing at t=" + std::to_string(t));
    }
  }
}

double NoiseSchedule::step_survival(int t) const {
  return survival_between(t - 1, t);
}

double NoiseSchedule::survival_between(int s, int t) const {
  if (s < 0 || t > num_steps() || s > t) {
    throw InvalidArgument("invalid time pair (" + std::to_string(s) + ", " + std::to_string(t) + ")");
  }
  if (s == t) return 1.0;
  // alpha_bar[s] > 0 whenever s < T.
  return alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(s)];
}

NoiseSchedule build_linear_schedule(int num_steps) {
  if (num_steps < 1) {
    throw InvalidArgument("schedule needs T >= 1, got " + std::to_string(num_steps));
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(num_steps) + 1);
  for (int t = 0; t <= num_steps; ++t) {
    alpha_bar[static_cast<std::size_t>(t)] = 1.0 - static_cast<double>(t) / num_steps;
  }
  alpha_bar.back() = 0.0;
  return NoiseSchedule(std::move(alpha_bar));
}

CategoricalDist::CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) {
    throw InvalidArgument("categorical distribution is empty");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      throw InvalidArgument("categorical probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << "categorical probabilities sum to " << total << ", expected 1";
    throw InvalidArgument(msg.str());
  }
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  engine_.seed(seq);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) {
    throw InvalidArgument("Rng::below(0)");
  }
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

std::size_t sample_categorical(const CategoricalDist& dist, Rng& rng) {
  return sample_weighted(dist.probs(), rng);
}

std::size_t sample_weighted(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw InvalidArgument("sampling weights must be finite and non-negative");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    throw InvalidArgument("sampling weights are all zero");
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

std::string format_sequence(const Sequence& x) {
  std::string out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(x[i]);
  }
  return out;
}

}  // namespace csmc
