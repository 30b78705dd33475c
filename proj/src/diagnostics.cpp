#include "csmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace csmc {

std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag) {
  if (series.empty()) throw InvalidArgument("autocorrelation of an empty series");
  if (max_lag >= series.size()) {
    throw InvalidArgument("max_lag must be smaller than the series length");
  }
  const std::size_t n = series.size();
  std::vector<double> acf(max_lag + 1, 0.0);
  acf[0] = 1.0;
  // Rounding in the mean would otherwise leave a constant series with tiny nonzero deviations.
  if (std::all_of(series.begin(), series.end(), [&](double x) { return x == series[0]; })) return acf;
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    centered[i] = series[i] - mean;
    denom += centered[i] * centered[i];
  }
  if (denom == 0.0) return acf;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) num += centered[i] * centered[i + k];
    acf[k] = num / denom;
  }
  return acf;
}

double acceptance_rate(const ChainResult& chain) {
  if (chain.proposals.empty()) throw InvalidArgument("acceptance rate needs at least one iteration");
  std::size_t accepted = 0;
  for (const auto& p : chain.proposals) accepted += p.accepted ? 1 : 0;
  return static_cast<double>(accepted) / static_cast<double>(chain.proposals.size());
}

double diversity(const std::vector<Sequence>& samples) {
  if (samples.size() < 2) throw InvalidArgument("diversity needs at least 2 samples");
  const std::size_t length = samples.front().size();
  if (length == 0) throw InvalidArgument("diversity needs non-empty sequences");
  double similarity = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < samples.size(); ++a) {
    if (samples[a].size() != length) throw InvalidArgument("diversity needs equal-length samples");
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      std::size_t same = 0;
      for (std::size_t i = 0; i < length; ++i) same += samples[a][i] == samples[b][i] ? 1 : 0;
      similarity += static_cast<double>(same) / static_cast<double>(length);
      ++pairs;
    }
  }
  return 1.0 - similarity / static_cast<double>(pairs);
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("summary of an empty sample");
  SummaryStats s;
  s.n = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  s.ci95_halfwidth = 1.96 * s.std / std::sqrt(static_cast<double>(s.n));
  return s;
}

SummaryStats reward_summary(const std::vector<Sequence>& samples, const RewardFn& reward) {
  const auto values = reward.batch(samples);
  return summarize(values);
}

void write_acf_csv(const std::filesystem::path& path, const std::vector<double>& acf) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << std::setprecision(17) << "lag,value\n";
  for (std::size_t k = 0; k < acf.size(); ++k) out << k << ',' << acf[k] << '\n';
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << std::setprecision(17) << "metric,value\n";
  for (const auto& [metric, value] : rows) out << metric << ',' << value << '\n';
}

}  // namespace csmc
