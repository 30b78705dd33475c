#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "csmc/core.hpp"
#include "csmc/forward_process.hpp"

namespace csmc {

/// A finite distribution over clean sequences of one length.
class DataDistribution {
 public:
  DataDistribution(std::vector<Sequence> support, std::vector<double> probs);

  /// Empirical law of `samples` (no smoothing: support is exactly what was observed).
  static DataDistribution from_samples(const std::vector<Sequence>& samples);
  /// Reads `prob<TAB>tok,tok,...` lines. Blank lines and lines starting with '#' are skipped.
  static DataDistribution load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<Sequence>& support() const { return support_; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return support_.size(); }
  int length() const { return static_cast<int>(support_.front().size()); }
  /// Probability of `x`, zero when it lies outside the support.
  double prob(const Sequence& x) const;

 private:
  std::vector<Sequence> support_;
  std::vector<double> probs_;
  std::map<Sequence, std::size_t> index_;
};

/// Weighted list of clean sequences, the explicit form of p(x_0 | x_t).
struct SequenceDistribution {
  std::vector<Sequence> sequences;
  std::vector<double> probs;
};

/// Maps a noisy sequence x_t at time t to a distribution over clean sequences.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Draws x̂_0 ~ p(x_0 | x_t). Always returns a clean sequence.
  virtual Sequence sample_x0(const Sequence& xt, int t, Rng& rng) const = 0;
  /// The full distribution p(x_0 | x_t); used by the enumeration engine.
  virtual SequenceDistribution x0_distribution(const Sequence& xt, int t) const = 0;
  /// True when the distribution is the exact Bayes posterior of the data law.
  virtual bool exact() const = 0;
  virtual const TransitionModel& model() const = 0;
};

/// Exact Bayes posterior over an enumerated data distribution.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(std::shared_ptr<const TransitionModel> model, std::shared_ptr<const DataDistribution> data);

  /// Posterior weights aligned with data().support().
  std::vector<double> posterior(const Sequence& xt, int t) const;

  Sequence sample_x0(const Sequence& xt, int t, Rng& rng) const override;
  SequenceDistribution x0_distribution(const Sequence& xt, int t) const override;
  bool exact() const override { return true; }
  const TransitionModel& model() const override { return *model_; }
  const DataDistribution& data() const { return *data_; }

 private:
  std::shared_ptr<const TransitionModel> model_;
  std::shared_ptr<const DataDistribution> data_;
};

/// Keeps only the per-position marginals of the oracle posterior and samples
/// positions independently, the way a neural denoiser's factorized output does.
/// Approximate: excluded from exactness checks.
class FactorizedDenoiser : public Denoiser {
 public:
  explicit FactorizedDenoiser(std::shared_ptr<const OracleDenoiser> oracle);

  /// marginals[i][v] = p(x_0[i] = v | x_t).
  std::vector<std::vector<double>> position_marginals(const Sequence& xt, int t) const;

  Sequence sample_x0(const Sequence& xt, int t, Rng& rng) const override;
  SequenceDistribution x0_distribution(const Sequence& xt, int t) const override;
  bool exact() const override { return false; }
  const TransitionModel& model() const override { return oracle_->model(); }

 private:
  std::shared_ptr<const OracleDenoiser> oracle_;
};

/// Forwards to another denoiser and counts calls (the NFE currency).
class CountingDenoiser : public Denoiser {
 public:
  explicit CountingDenoiser(std::shared_ptr<const Denoiser> inner) : inner_(std::move(inner)) {}

  Sequence sample_x0(const Sequence& xt, int t, Rng& rng) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->sample_x0(xt, t, rng);
  }
  SequenceDistribution x0_distribution(const Sequence& xt, int t) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->x0_distribution(xt, t);
  }
  bool exact() const override { return inner_->exact(); }
  const TransitionModel& model() const override { return inner_->model(); }

  std::uint64_t calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  std::shared_ptr<const Denoiser> inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

std::vector<double> oracle_posterior(const DataDistribution& data, const TransitionModel& model,
                                     const Sequence& xt, int t);

Sequence sample_x0_prediction(const Denoiser& denoiser, const Sequence& xt, int t, Rng& rng);

}  // namespace csmc
