#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csmc/core.hpp"
#include "csmc/csmc_sampler.hpp"
#include "csmc/rewards.hpp"

namespace csmc {

struct SummaryStats {
  double mean = 0.0;
  /// Sample standard deviation (n - 1 denominator; 0 when n == 1).
  double std = 0.0;
  /// 1.96 * std / sqrt(n)
  double ci95_halfwidth = 0.0;
  std::size_t n = 0;
};

/// Biased ACF estimate for lags 0..max_lag. Constant series give rho(k) = 0 for k >= 1.
std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

/// Accepted proposals / K.
double acceptance_rate(const ChainResult& chain);

/// 1 - mean pairwise fraction of matching positions.
double diversity(const std::vector<Sequence>& samples);

SummaryStats summarize(std::span<const double> values);
SummaryStats reward_summary(const std::vector<Sequence>& samples, const RewardFn& reward);

/// Writes `lag,value` rows.
void write_acf_csv(const std::filesystem::path& path, const std::vector<double>& acf);
/// Writes `metric,value` rows.
void write_summary_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& rows);

}  // namespace csmc
