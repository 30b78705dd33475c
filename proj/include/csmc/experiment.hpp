#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "csmc/baselines.hpp"
#include "csmc/csmc_sampler.hpp"
#include "csmc/diagnostics.hpp"
#include "csmc/denoiser.hpp"
#include "csmc/forward_process.hpp"
#include "csmc/rewards.hpp"

namespace csmc {

/// A problem with the experiment config. `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line);
  int line() const { return line_; }

 private:
  int line_;
};

enum class Method { Pretrained, BestOfN, Smc, Svdd, Csmc, CsmcBatched };

const char* to_string(Method method);

struct MethodSpec {
  Method method = Method::Pretrained;
  /// Display name; defaults to the method name.
  std::string label;
  CsmcConfig csmc;
  BaselineConfig baseline;
};

struct ModelSpec {
  NoiseKind kind = NoiseKind::Masked;
  int vocab_size = 2;
  int length = 1;
  int num_steps = 8;
  std::map<Token, std::string> glyphs;
};

struct ExperimentConfig {
  ModelSpec model;
  std::shared_ptr<const DataDistribution> data;
  /// "oracle" or "factorized".
  std::string denoiser = "oracle";
  nlohmann::json reward;
  std::vector<MethodSpec> methods;
  int num_samples = 16;
  std::uint64_t seed = 0;
  /// Seeds used by `compare`: seed, seed+1, ...
  int num_seeds = 1;
  std::filesystem::path output_dir = "csmc_out";
  /// The parsed document, echoed into metrics.json.
  nlohmann::json raw;
};

/// Parses a JSON config. Relative data paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Everything a method needs, built once per config.
struct Fixture {
  std::shared_ptr<const TransitionModel> model;
  std::shared_ptr<const DataDistribution> data;
  std::shared_ptr<const OracleDenoiser> oracle;
  std::shared_ptr<const Denoiser> denoiser;
  std::shared_ptr<const RewardFn> reward;
  int length = 0;
};

Fixture build_fixture(const ExperimentConfig& config);
std::shared_ptr<const RewardFn> build_reward(const nlohmann::json& spec, const Vocabulary& vocab);

struct MethodOutcome {
  std::vector<Sequence> samples;
  std::vector<double> rewards;
  /// Exact count of denoiser calls made by the method.
  std::uint64_t nfe = 0;
  std::optional<double> acceptance_rate;
  /// Reward of the chain state at every iteration (CSMC only; first chain for CSMC-B).
  std::vector<double> reward_trace;
  int uniform_fallbacks = 0;
  std::vector<ChainResult> chains;
};

/// Runs one method and returns exactly `num_samples` samples.
MethodOutcome run_method(const Fixture& fixture, const MethodSpec& spec, int num_samples, std::uint64_t seed);

/// Writes samples.csv, metrics.json, summary.csv and method diagnostics into `out_dir`.
nlohmann::json write_run_outputs(const ExperimentConfig& config, const Fixture& fixture, const MethodSpec& spec,
                                 const MethodOutcome& outcome, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

struct VerifyReport {
  std::size_t num_states = 0;
  double reversibility_residual = 0.0;
  double stationarity_residual = 0.0;
  /// TV between the limit of the MH kernel and the exact target.
  double limit_tv = 0.0;
  /// TV between the limit of the zero-reward kernel (= proposal) and p^pre.
  double zero_reward_limit_tv = 0.0;
  bool passed = false;

  static constexpr double kReversibilityTol = 1e-9;
  static constexpr double kStationarityTol = 1e-8;
  static constexpr double kLimitTol = 1e-6;
};

/// Exact enumeration checks on the config's fixture using its first CSMC method block.
/// When `export_dir` is set, the kernels and distributions are written there as CSV.
VerifyReport verify_fixture(const ExperimentConfig& config, const std::optional<std::filesystem::path>& export_dir = {});

/// Per-method rows (mean over seeds) for `compare`.
struct CompareRow {
  std::string label;
  SummaryStats per_seed_mean;
  double mean_reward = 0.0;
  double mean_diversity = 0.0;
  double nfe_per_sample = 0.0;
  std::optional<double> acceptance_rate;
};

std::vector<CompareRow> run_compare(const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace csmc
