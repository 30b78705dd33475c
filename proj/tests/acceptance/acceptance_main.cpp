// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "csmc/exact_engine.hpp"
#include "csmc/experiment.hpp"

using namespace csmc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, std::string& output) {
  const auto log = fs::temp_directory_path() / "csmc_acceptance_cli.txt";
  const std::string cmd = std::string(CSMC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  output = slurp(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("csmc_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const json kBracketMarkov = {{"initial", {0.3, 0.3, 0.4}},
                             {"transition", {{0.2, 0.5, 0.3}, {0.4, 0.2, 0.4}, {0.3, 0.3, 0.4}}}};

json bracket_config(const std::string& kind) {
  return {{"model", {{"kind", kind}, {"V", 3}, {"L", 4}, {"T", 8}}},
          {"data", {{"markov", kBracketMarkov}}},
          {"reward", {{"name", "gated_bracket"}, {"open", 0}, {"close", 1}}}};
}

struct Built {
  ExperimentConfig config;
  Fixture fixture;
};

// Wide noise window and short burn-in: the chain regenerates most of the sequence each step.
json mixing_chain(const char* name, int iterations) {
  return {{"name", name}, {"beta", 0.1}, {"M", 2}, {"t_lo", 0.5}, {"t_hi", 1.0}, {"burn_in_fraction", 0.1}, {"K", iterations}};
}

Built build(const json& doc) {
  Built b{parse_config(doc.dump(2)), {}};
  b.fixture = build_fixture(b.config);
  return b;
}

std::vector<Sequence> post_burn_in(const ChainResult& chain, double burn_in_fraction) {
  const auto start = static_cast<std::size_t>(std::ceil(burn_in_fraction * static_cast<double>(chain.states.size())));
  return {chain.states.begin() + static_cast<std::ptrdiff_t>(start), chain.states.end()};
}

Eigen::VectorXd target_of(const Built& b, double beta) {
  const EnumeratedSpace space(b.config.model.vocab_size, b.config.model.length);
  return exact_target(distribution_on(space, *b.fixture.data), reward_vector(space, *b.fixture.reward), beta);
}

Eigen::VectorXd empirical(const Built& b, const std::vector<Sequence>& xs) {
  return empirical_distribution(EnumeratedSpace(b.config.model.vocab_size, b.config.model.length), xs);
}

struct SeedStats {
  std::vector<double> means;
  std::uint64_t nfe = 0;

  double mean() const {
    double s = 0.0;
    for (double m : means) s += m;
    return s / static_cast<double>(means.size());
  }
  double variance() const {
    const double mu = mean();
    double s = 0.0;
    for (double m : means) s += (m - mu) * (m - mu);
    return s / static_cast<double>(means.size() - 1);
  }
};

SeedStats over_seeds(const Built& b, const MethodSpec& spec, int samples, int seeds) {
  SeedStats st;
  for (int k = 0; k < seeds; ++k) {
    const auto out = run_method(b.fixture, spec, samples, 1000 + static_cast<std::uint64_t>(k));
    double s = 0.0;
    for (double r : out.rewards) s += r;
    st.means.push_back(s / static_cast<double>(out.rewards.size()));
    st.nfe = std::max(st.nfe, out.nfe);
  }
  return st;
}

/// Gap a - b in units of the pooled standard error of the two seed means.
double gap_in_se(const SeedStats& a, const SeedStats& b) {
  const double n = static_cast<double>(a.means.size());
  const double se = std::sqrt(a.variance() / n + b.variance() / n);
  const double gap = a.mean() - b.mean();
  return se > 0.0 ? gap / se : (gap > 0.0 ? INFINITY : -INFINITY);
}

MethodSpec method(const json& block, const ExperimentConfig& base) {
  json doc = base.raw;
  doc.erase("methods");
  doc["method"] = block;
  return parse_config(doc.dump()).methods.at(0);
}

Outcome exact_stationarity() {
  Outcome o;
  const auto start = Clock::now();
  const auto dir = scratch("verify");
  double worst_stat = 0.0, worst_rev = 0.0;
  int count = 0;
  for (int length = 1; length <= 4; ++length) {
    for (const char* kind : {"masked", "uniform"}) {
      for (double beta : {1.0, 0.1, 0.02}) {
        const json doc = {
            {"model", {{"kind", kind}, {"V", 2}, {"L", length}, {"T", 8}}},
            {"data", {{"markov", {{"initial", {0.6, 0.4}}, {"transition", {{0.7, 0.3}, {0.45, 0.55}}}}}}},
            {"reward", {{"name", "gated_bracket"}, {"open", 0}, {"close", 1}}},
            {"method", {{"name", "csmc"}, {"beta", beta}, {"M", 2}}}};
        const auto path = dir / ("v2_l" + std::to_string(length) + "_" + kind + "_" + fmt("%g", beta) + ".json");
        std::ofstream(path) << doc.dump(2);
        std::string out;
        const int code = run_cli("verify --config " + path.string(), out);
        std::smatch m;
        const std::regex stat("stationarity residual\\s+(\\S+)"), rev("reversibility residual\\s+(\\S+)");
        if (code != 0 || !std::regex_search(out, m, stat)) {
          o.passed = false;
          o.detail += " [" + path.filename().string() + " exit " + std::to_string(code) + "]";
          continue;
        }
        const double s = std::stod(m[1]);
        std::regex_search(out, m, rev);
        const double r = std::stod(m[1]);
        worst_stat = std::max(worst_stat, s);
        worst_rev = std::max(worst_rev, r);
        o.passed = o.passed && s < 1e-8 && r < 1e-9;
        ++count;
      }
    }
  }
  const double secs = seconds_since(start);
  o.passed = o.passed && count == 24 && secs < 60.0;
  o.detail = std::to_string(count) + " fixtures, max stationarity " + fmt("%.2e", worst_stat) + ", max reversibility " +
             fmt("%.2e", worst_rev) + ", " + fmt("%.1f", secs) + " s" + o.detail;
  fs::remove_all(dir);
  return o;
}

Outcome empirical_convergence() {
  Outcome o;
  const auto start = Clock::now();
  for (const char* kind : {"masked", "uniform"}) {
    json doc = bracket_config(kind);
    doc["method"] = mixing_chain("csmc", 50000);
    const auto b = build(doc);
    const auto out = run_method(b.fixture, b.config.methods[0], 1, 11);
    const double tv = tv_distance(empirical(b, post_burn_in(out.chains[0], 0.1)), target_of(b, 0.1));
    o.passed = o.passed && tv < 0.05;
    o.detail += std::string(kind) + " TV " + fmt("%.4f", tv) + ", ";
  }
  const double secs = seconds_since(start);
  o.passed = o.passed && secs < 300.0;
  o.detail += fmt("%.1f", secs) + " s";
  return o;
}

Outcome zero_reward_limit() {
  Outcome o;
  for (const char* kind : {"masked", "uniform"}) {
    json doc = bracket_config(kind);
    doc["reward"] = {{"name", "constant"}, {"value", 0.0}};
    doc["method"] = mixing_chain("csmc", 50000);
    const auto b = build(doc);
    const auto out = run_method(b.fixture, b.config.methods[0], 1, 12);
    const double rate = *out.acceptance_rate;
    const EnumeratedSpace space(3, 4);
    const double tv = tv_distance(empirical(b, post_burn_in(out.chains[0], 0.1)), distribution_on(space, *b.fixture.data));
    o.passed = o.passed && rate == 1.0 && tv < 0.05;
    o.detail += std::string(kind) + " acceptance " + fmt("%.17g", rate) + " TV " + fmt("%.4f", tv) + "; ";
  }
  return o;
}

Outcome acceptance_formula() {
  Outcome o;
  const double beta = 0.02;
  const auto same = acceptance(0.37, 0.37, beta);
  const auto half = acceptance(0.5 - beta * std::log(2.0), 0.5, beta);
  const auto up = acceptance(1e3, 0.0, beta);
  const auto down = acceptance(0.0, 1e3, beta);
  o.passed = same.alpha() == 1.0 && same.probability == 1.0 && std::abs(half.probability - 0.5) < 1e-12 &&
             up.probability == 1.0 && std::isfinite(up.log_alpha) && std::abs(up.log_alpha - 5e4) < 1e-6 &&
             down.probability == 0.0 && std::isfinite(down.log_alpha);
  o.detail = "alpha(r,r) " + fmt("%g", same.alpha()) + ", A(-beta ln 2) " + fmt("%.15f", half.probability) +
             ", A(+1e3) " + fmt("%g", up.probability) + " with log alpha " + fmt("%g", up.log_alpha);
  return o;
}

Outcome forward_algebra() {
  Outcome o;
  double chain_err = 0.0, marginal_err = 0.0, unmask_err = 0.0;
  for (auto kind : {NoiseKind::Masked, NoiseKind::Uniform}) {
    for (int v : {2, 3, 5}) {
      for (int steps : {1, 8, 50}) {
        const auto schedule = build_linear_schedule(steps);
        const TransitionModel m(kind, schedule, Vocabulary(v, kind == NoiseKind::Masked));
        Eigen::MatrixXd product = Eigen::MatrixXd::Identity(m.alphabet_size(), m.alphabet_size());
        for (int t = 1; t <= steps; ++t) {
          chain_err = std::max(chain_err, (m.cumulative_matrix(t) - m.cumulative_matrix(t - 1) * m.transition_matrix(t))
                                              .cwiseAbs()
                                              .maxCoeff());
          product = product * m.transition_matrix(t);
          for (Token x0 = 0; x0 < v; ++x0) {
            const auto marginal = m.marginal(x0, t);
            for (int j = 0; j < m.alphabet_size(); ++j) {
              marginal_err = std::max(marginal_err, std::abs(marginal[static_cast<std::size_t>(j)] - product(x0, j)));
            }
            if (kind == NoiseKind::Masked) {
              const double expected =
                  (schedule.alpha_bar(t - 1) - schedule.alpha_bar(t)) / (1.0 - schedule.alpha_bar(t));
              const auto post = m.posterior(static_cast<Token>(v), x0, t);
              unmask_err = std::max(unmask_err, std::abs(post[static_cast<std::size_t>(x0)] - expected));
            }
          }
        }
      }
    }
  }
  o.passed = chain_err < 1e-10 && marginal_err < 1e-9 && unmask_err < 1e-12;
  o.detail = "chain " + fmt("%.2e", chain_err) + ", marginals " + fmt("%.2e", marginal_err) + ", unmask " +
             fmt("%.2e", unmask_err);
  return o;
}

std::string ordering_detail(const std::vector<std::pair<std::string, const SeedStats*>>& rows) {
  std::string s;
  for (const auto& [name, st] : rows) {
    s += name + " " + fmt("%.3f", st->mean()) + " (NFE " + std::to_string(st->nfe) + "), ";
  }
  return s;
}

Outcome low_density_ordering() {
  Outcome o;
  const auto start = Clock::now();
  // 0 -> 1 transitions are rare, so the optimum 0101 has pretrained probability 0.0012.
  const json doc = {
      {"model", {{"kind", "masked"}, {"V", 3}, {"L", 4}, {"T", 8}}},
      {"data",
       {{"markov", {{"initial", {0.4, 0.3, 0.3}}, {"transition", {{0.5, 0.1, 0.4}, {0.3, 0.4, 0.3}, {0.3, 0.3, 0.4}}}}}}},
      {"reward", {{"name", "pattern"}, {"pattern", {0, 1}}}},
      {"method", {{"name", "pretrained"}}}};
  const auto b = build(doc);
  const EnumeratedSpace space(3, 4);
  const auto p0 = distribution_on(space, *b.fixture.data);
  const auto r = reward_vector(space, *b.fixture.reward);
  double optimum_mass = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r(i) == r.maxCoeff()) optimum_mass += p0(i);
  }

  const int samples = 16, seeds = 10;
  const auto pre = over_seeds(b, method({{"name", "pretrained"}}, b.config), samples, seeds);
  const auto bon = over_seeds(b, method({{"name", "bon"}, {"n", 16}}, b.config), samples, seeds);
  // 8 + 2 K = 16 * 16 * 8 when every proposal time is at least M.
  const auto csmc = over_seeds(b, method({{"name", "csmc"}, {"beta", 0.1}, {"M", 2}, {"K", 1020}}, b.config), samples, seeds);
  const double nfe_gap = std::abs(static_cast<double>(csmc.nfe) - static_cast<double>(bon.nfe)) / static_cast<double>(bon.nfe);
  const double g1 = gap_in_se(csmc, bon), g2 = gap_in_se(bon, pre);
  const double secs = seconds_since(start);
  o.passed = optimum_mass < 0.01 && nfe_gap < 0.01 && g1 > 2.0 && g2 > 2.0 && secs < 600.0;
  o.detail = "p_pre(optimum) " + fmt("%.4f", optimum_mass) + "; " +
             ordering_detail({{"csmc", &csmc}, {"bon", &bon}, {"pretrained", &pre}}) + "gaps " + fmt("%.1f", g1) +
             " and " + fmt("%.1f", g2) + " SE, " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome brittle_ordering() {
  Outcome o;
  json doc = bracket_config("masked");
  doc["denoiser"] = "factorized";
  doc["method"] = {{"name", "pretrained"}};
  const auto b = build(doc);
  const int samples = 16, seeds = 10;
  // beta = 0.02 throughout. SMC runs one population of `samples` particles (240 calls);
  // SVDD and CSMC are matched at 1920 calls: 16 x 8 x 15 and 8 + 2 x 956.
  const auto svdd = over_seeds(b, method({{"name", "svdd"}, {"beta", 0.02}, {"n", 8}}, b.config), samples, seeds);
  const auto smc = over_seeds(b, method({{"name", "smc"}, {"beta", 0.02}, {"n", samples}}, b.config), samples, seeds);
  const auto csmc =
      over_seeds(b, method({{"name", "csmc"}, {"beta", 0.02}, {"M", 2}, {"K", 956}}, b.config), samples, seeds);
  const double g_svdd = gap_in_se(csmc, svdd), g_smc = gap_in_se(csmc, smc);
  o.passed = g_svdd > 2.0 && g_smc > 2.0;
  o.detail = ordering_detail({{"csmc", &csmc}, {"svdd", &svdd}, {"smc", &smc}}) + "gaps " + fmt("%.1f", g_svdd) +
             " and " + fmt("%.1f", g_smc) + " SE";
  return o;
}

Outcome acf_decay() {
  Outcome o;
  json doc = bracket_config("masked");
  // Default chain settings.
  doc["method"] = {{"name", "csmc"}, {"K", 20000}};
  const auto b = build(doc);
  const auto out = run_method(b.fixture, b.config.methods[0], 1, 13);
  const auto& trace = out.reward_trace;
  const auto acf = autocorrelation(trace, trace.size() - 1);
  double worst = 0.0;
  for (std::size_t k = 2001; k < acf.size(); ++k) worst = std::max(worst, std::abs(acf[k]));
  std::size_t first_small = 1;
  while (first_small < acf.size() && std::abs(acf[first_small]) >= 0.1) ++first_small;
  o.passed = trace.size() == 20001 && worst < 0.1;
  o.detail = "max |rho(k)| over k > 2000 is " + fmt("%.4f", worst) + "; |rho| first below 0.1 at lag " +
             std::to_string(first_small);
  return o;
}

Outcome batched_equivalence() {
  Outcome o;
  json doc = bracket_config("masked");
  doc["method"] = mixing_chain("csmc", 3000);
  auto b = build(doc);
  CsmcConfig c = b.config.methods[0].csmc;
  c.num_samples = 20;
  c.seed = 21;
  Rng rng(21, 0);
  const auto single = run_chain(c, *b.fixture.denoiser, *b.fixture.reward, 4, rng);
  const auto batched = run_batched(c, *b.fixture.denoiser, *b.fixture.reward, 4);
  const bool identical = batched.chains.size() == 1 && batched.chains[0].states == single.states &&
                         batched.chains[0].rewards == single.rewards &&
                         batched.samples == draw_samples(single, 20, c.burn_in_fraction);

  c.batch = 8;
  c.threads = 4;
  c.iterations = 50000;
  c.num_samples = 1;
  const auto eight = run_batched(c, *b.fixture.denoiser, *b.fixture.reward, 4);
  std::vector<Sequence> pooled;
  for (const auto& chain : eight.chains) {
    const auto kept = post_burn_in(chain, c.burn_in_fraction);
    pooled.insert(pooled.end(), kept.begin(), kept.end());
  }
  const double tv = tv_distance(empirical(b, pooled), target_of(b, 0.1));
  o.passed = identical && eight.chains.size() == 8 && tv < 0.05;
  o.detail = std::string("B=1 ") + (identical ? "bit-identical" : "DIFFERS") + "; B=8 pooled TV " + fmt("%.4f", tv) +
             " over " + std::to_string(pooled.size()) + " states";
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto dir = scratch("determinism");
  json doc = bracket_config("masked");
  doc["num_samples"] = 32;
  doc["seed"] = 5;
  doc["methods"] = json::array({{{"name", "pretrained"}},
                                {{"name", "bon"}, {"n", 8}},
                                {{"name", "smc"}, {"n", 8}, {"beta", 0.1}},
                                {{"name", "svdd"}, {"n", 4}, {"beta", 0.1}, {"rule", "proportional"}},
                                {{"name", "csmc"}, {"beta", 0.1}, {"M", 2}, {"K", 2000}},
                                {{"name", "csmc_b"}, {"beta", 0.1}, {"M", 2}, {"K", 4000}, {"threads", 4}}});
  std::ofstream(dir / "all.json") << doc.dump(2);
  std::string log;
  const int a = run_cli("run --config " + (dir / "all.json").string() + " --out " + (dir / "a").string(), log);
  const int b = run_cli("run --config " + (dir / "all.json").string() + " --out " + (dir / "b").string(), log);
  int compared = 0;
  o.passed = a == 0 && b == 0;
  for (const char* label : {"pretrained", "bon", "smc", "svdd", "csmc", "csmc_b"}) {
    for (const char* file : {"samples.csv", "metrics.json"}) {
      const auto x = slurp(dir / "a" / label / file), y = slurp(dir / "b" / label / file);
      if (x.empty() || x != y) {
        o.passed = false;
        o.detail += std::string(" ") + label + "/" + file + " differs;";
      }
      ++compared;
    }
  }
  o.detail = std::to_string(compared) + " files compared across two runs of six methods" + o.detail;
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact stationarity", exact_stationarity},
      {"empirical convergence", empirical_convergence},
      {"zero-reward limit", zero_reward_limit},
      {"acceptance formula", acceptance_formula},
      {"forward-process algebra", forward_algebra},
      {"low-density ordering", low_density_ordering},
      {"brittle-reward ordering", brittle_ordering},
      {"ACF decay", acf_decay},
      {"CSMC-B equivalence", batched_equivalence},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.passed ? 0 : 1;
    std::printf("%s  %-24s %s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
