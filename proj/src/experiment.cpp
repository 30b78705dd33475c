#include "csmc/experiment.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "csmc/exact_engine.hpp"
#include "csmc/reverse_sampler.hpp"

namespace csmc {

using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// Byte offsets of every object key and array element, by JSON pointer. Runs on text that already parsed.
class SourceLines {
 public:
  explicit SourceLines(std::string text) : text_(std::move(text)) { scan(); }

  int line_of_offset(std::size_t offset) const {
    int line = 1;
    for (std::size_t i = 0; i < offset && i < text_.size(); ++i) line += text_[i] == '\n' ? 1 : 0;
    return line;
  }

  /// 0 if the pointer never appears in the text.
  int line_of_pointer(const std::string& pointer) const {
    const auto it = offsets_.find(pointer);
    return it == offsets_.end() ? 0 : line_of_offset(it->second);
  }

 private:
  struct Frame {
    bool object;
    std::string prefix;
    std::string key;
    int index = 0;
    bool pending = true;
  };

  std::string child_prefix(const Frame& f) const {
    return f.prefix + "/" + (f.object ? pointer_token(f.key) : std::to_string(f.index));
  }

  void scan() {
    std::vector<Frame> stack;
    for (std::size_t i = 0; i < text_.size(); ++i) {
      const char c = text_[i];
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      if (!stack.empty() && !stack.back().object && stack.back().pending && c != ']' && c != ',') {
        offsets_[child_prefix(stack.back())] = i;
        stack.back().pending = false;
      }
      if (c == '"') {
        const std::size_t begin = i;
        std::string raw;
        for (++i; i < text_.size() && text_[i] != '"'; ++i) {
          if (text_[i] == '\\' && i + 1 < text_.size()) ++i;
          raw += text_[i];
        }
        if (!stack.empty() && stack.back().object && stack.back().pending) {
          stack.back().key = raw;
          stack.back().pending = false;
          offsets_[child_prefix(stack.back())] = begin;
        }
      } else if (c == '{' || c == '[') {
        const std::string prefix = stack.empty() ? "" : child_prefix(stack.back());
        stack.push_back(Frame{c == '{', prefix, "", 0, true});
      } else if (c == '}' || c == ']') {
        if (!stack.empty()) stack.pop_back();
      } else if (c == ',' && !stack.empty()) {
        stack.back().pending = true;
        if (!stack.back().object) ++stack.back().index;
      }
    }
  }

  std::string text_;
  std::map<std::string, std::size_t> offsets_;
};

class ConfigReader {
 public:
  ConfigReader(const std::string& text, const std::filesystem::path& base_dir) : lines_(text), base_dir_(base_dir) {}

  void set_root(json doc) {
    root_ = std::move(doc);
    index(root_, "");
  }
  const json& root() const { return root_; }

  [[noreturn]] void fail(const json& parent, const std::string& key, const std::string& message) const {
    const auto it = pointers_.find(&parent);
    const std::string base = it == pointers_.end() ? "" : it->second;
    int line = lines_.line_of_pointer(base + "/" + pointer_token(key));
    if (line == 0 && !base.empty()) line = lines_.line_of_pointer(base);
    throw ConfigError("'" + key + "': " + message, line);
  }

  const json& require(const json& obj, const std::string& key) const {
    if (!obj.is_object() || !obj.contains(key)) fail(obj, key, "missing required field");
    return obj.at(key);
  }

  template <typename T>
  T get(const json& obj, const std::string& key) const {
    try {
      return require(obj, key).get<T>();
    } catch (const json::exception& e) {
      fail(obj, key, std::string("wrong type: ") + e.what());
    }
  }

  template <typename T>
  T get_or(const json& obj, const std::string& key, T fallback) const {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    return get<T>(obj, key);
  }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir_ / path;
  }

  const SourceLines& lines() const { return lines_; }

 private:
  void index(const json& node, const std::string& pointer) {
    pointers_[&node] = pointer;
    if (node.is_object()) {
      for (const auto& [k, v] : node.items()) index(v, pointer + "/" + pointer_token(k));
    } else if (node.is_array()) {
      for (std::size_t i = 0; i < node.size(); ++i) index(node[i], pointer + "/" + std::to_string(i));
    }
  }

  SourceLines lines_;
  std::filesystem::path base_dir_;
  json root_;
  std::map<const json*, std::string> pointers_;
};

Sequence parse_sequence_line(const std::string& line, const std::string& where) {
  Sequence s;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      s.push_back(static_cast<Token>(std::stoi(item)));
    } catch (const std::exception&) {
      throw InvalidArgument(where + ": bad token '" + item + "'");
    }
  }
  return s;
}

DataDistribution markov_distribution(const std::vector<double>& initial, const std::vector<std::vector<double>>& transition,
                                     int vocab_size, int length) {
  if (static_cast<int>(initial.size()) != vocab_size || static_cast<int>(transition.size()) != vocab_size) {
    throw InvalidArgument("markov data needs an initial vector and transition matrix of size V");
  }
  const EnumeratedSpace space(vocab_size, length);
  std::vector<Sequence> support;
  std::vector<double> probs;
  double total = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    Sequence x = space.at(i);
    double p = initial[static_cast<std::size_t>(x[0])];
    for (std::size_t j = 1; j < x.size() && p > 0.0; ++j) {
      const auto& row = transition[static_cast<std::size_t>(x[j - 1])];
      if (static_cast<int>(row.size()) != vocab_size) throw InvalidArgument("markov transition rows must have V entries");
      p *= row[static_cast<std::size_t>(x[j])];
    }
    if (p > 0.0) {
      support.push_back(std::move(x));
      probs.push_back(p);
      total += p;
    }
  }
  if (!(total > 0.0)) throw InvalidArgument("markov data has no mass");
  for (double& p : probs) p /= total;
  return DataDistribution(std::move(support), std::move(probs));
}

std::shared_ptr<const DataDistribution> parse_data(const ConfigReader& r, const json& data, const ModelSpec& model) {
  if (!data.is_object()) r.fail(r.root(), "data", "expected an object");
  try {
    if (data.contains("table")) {
      std::vector<Sequence> support;
      std::vector<double> probs;
      for (const auto& row : data.at("table")) {
        if (row.is_array() && row.size() == 2) {
          probs.push_back(row[0].get<double>());
          support.push_back(row[1].get<Sequence>());
        } else {
          probs.push_back(row.at("prob").get<double>());
          support.push_back(row.at("tokens").get<Sequence>());
        }
      }
      return std::make_shared<DataDistribution>(std::move(support), std::move(probs));
    }
    if (data.contains("file")) {
      return std::make_shared<DataDistribution>(DataDistribution::load(r.resolve(data.at("file").get<std::string>())));
    }
    if (data.contains("samples_file")) {
      const auto path = r.resolve(data.at("samples_file").get<std::string>());
      std::ifstream in(path);
      if (!in) throw InvalidArgument("cannot open samples file " + path.string());
      std::vector<Sequence> samples;
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        samples.push_back(parse_sequence_line(line, path.string() + ":" + std::to_string(lineno)));
      }
      return std::make_shared<DataDistribution>(DataDistribution::from_samples(samples));
    }
    if (data.contains("markov")) {
      const auto& m = data.at("markov");
      return std::make_shared<DataDistribution>(markov_distribution(
          m.at("initial").get<std::vector<double>>(), m.at("transition").get<std::vector<std::vector<double>>>(),
          model.vocab_size, model.length));
    }
  } catch (const json::exception& e) {
    r.fail(r.root(), "data", e.what());
  } catch (const InvalidArgument& e) {
    r.fail(r.root(), "data", e.what());
  }
  r.fail(r.root(), "data", "expected one of table, file, samples_file, markov");
}

Method parse_method_name(const ConfigReader& r, const json& m, const std::string& name) {
  if (name == "pretrained") return Method::Pretrained;
  if (name == "bon") return Method::BestOfN;
  if (name == "smc") return Method::Smc;
  if (name == "svdd") return Method::Svdd;
  if (name == "csmc") return Method::Csmc;
  if (name == "csmc_b") return Method::CsmcBatched;
  r.fail(m, "name", "unknown method '" + name + "' (expected pretrained, bon, smc, svdd, csmc, csmc_b)");
}

MethodSpec parse_method(const ConfigReader& r, const json& m, int num_samples, std::uint64_t seed) {
  MethodSpec spec;
  spec.method = parse_method_name(r, m, r.get<std::string>(m, "name"));
  spec.label = r.get_or<std::string>(m, "label", to_string(spec.method));
  CsmcConfig& c = spec.csmc;
  c.beta = r.get_or<double>(m, "beta", c.beta);
  c.t_lo = r.get_or<double>(m, "t_lo", c.t_lo);
  c.t_hi = r.get_or<double>(m, "t_hi", c.t_hi);
  c.reverse_steps = r.get_or<int>(m, "M", c.reverse_steps);
  c.iterations = r.get_or<int>(m, "K", c.iterations);
  c.burn_in_fraction = r.get_or<double>(m, "burn_in_fraction", c.burn_in_fraction);
  c.batch = r.get_or<int>(m, "B", spec.method == Method::CsmcBatched ? 8 : 1);
  c.threads = r.get_or<int>(m, "threads", c.threads);
  c.num_samples = num_samples;
  c.seed = seed;
  BaselineConfig& b = spec.baseline;
  b.n = r.get_or<int>(m, "n", b.n);
  b.beta = c.beta;
  try {
    b.rule = parse_resample_rule(r.get_or<std::string>(m, "rule", "exponential"));
    if (spec.method == Method::Csmc || spec.method == Method::CsmcBatched) {
      c.validate();
      if (spec.method == Method::Csmc && c.batch != 1) throw InvalidArgument("method csmc runs one chain; use csmc_b");
    } else {
      b.validate();
      if ((spec.method == Method::Smc || spec.method == Method::Svdd) && b.n < 2) {
        throw InvalidArgument("n must be >= 2 for smc and svdd");
      }
    }
  } catch (const InvalidArgument& e) {
    r.fail(m, "name", e.what());
  }
  return spec;
}

}  // namespace

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + message : "config: " + message),
      line_(line) {}

const char* to_string(Method method) {
  switch (method) {
    case Method::Pretrained: return "pretrained";
    case Method::BestOfN: return "bon";
    case Method::Smc: return "smc";
    case Method::Svdd: return "svdd";
    case Method::Csmc: return "csmc";
    case Method::CsmcBatched: return "csmc_b";
  }
  return "unknown";
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  ConfigReader r(text, base_dir);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), r.lines().line_of_offset(e.byte == 0 ? 0 : e.byte - 1));
  }
  if (!doc.is_object()) throw ConfigError("top level must be a JSON object", 1);
  r.set_root(std::move(doc));
  const json& root = r.root();

  ExperimentConfig cfg;
  cfg.raw = root;
  const json& model = r.require(root, "model");
  try {
    cfg.model.kind = parse_noise_kind(r.get<std::string>(model, "kind"));
  } catch (const InvalidArgument& e) {
    r.fail(model, "kind", e.what());
  }
  cfg.model.vocab_size = r.get<int>(model, "V");
  cfg.model.length = r.get<int>(model, "L");
  cfg.model.num_steps = r.get<int>(model, "T");
  if (cfg.model.vocab_size < 2) r.fail(model, "V", "must be >= 2");
  if (cfg.model.length < 1) r.fail(model, "L", "must be >= 1");
  if (cfg.model.num_steps < 1) r.fail(model, "T", "must be >= 1");
  const auto glyphs = r.get_or<std::vector<std::string>>(model, "glyphs", {});
  if (!glyphs.empty() && static_cast<int>(glyphs.size()) != cfg.model.vocab_size) {
    r.fail(model, "glyphs", "expected exactly V glyphs");
  }
  for (std::size_t i = 0; i < glyphs.size(); ++i) cfg.model.glyphs[static_cast<Token>(i)] = glyphs[i];
  if (model.contains("mask_glyph")) {
    if (cfg.model.kind != NoiseKind::Masked) r.fail(model, "mask_glyph", "only valid for masked models");
    cfg.model.glyphs[static_cast<Token>(cfg.model.vocab_size)] = r.get<std::string>(model, "mask_glyph");
  }

  cfg.data = parse_data(r, r.require(root, "data"), cfg.model);
  if (cfg.data->length() != cfg.model.length) {
    r.fail(r.root(), "data", "data sequences have length " + std::to_string(cfg.data->length()) + " but L = " +
                       std::to_string(cfg.model.length));
  }
  for (const auto& x : cfg.data->support()) {
    for (Token t : x) {
      if (t >= cfg.model.vocab_size) r.fail(r.root(), "data", "data sequence [" + format_sequence(x) + "] uses tokens >= V");
    }
  }
  cfg.denoiser = r.get_or<std::string>(root, "denoiser", "oracle");
  if (cfg.denoiser != "oracle" && cfg.denoiser != "factorized") {
    r.fail(r.root(), "denoiser", "expected oracle or factorized");
  }
  cfg.reward = r.require(root, "reward");
  if (!cfg.reward.is_object()) r.fail(r.root(), "reward", "expected an object");
  // Build once to surface reward spec errors at parse time (external servers are not spawned here).
  if (cfg.reward.value("name", std::string()) != "external") {
    try {
      build_reward(cfg.reward, Vocabulary(cfg.model.vocab_size, cfg.model.kind == NoiseKind::Masked));
    } catch (const std::exception& e) {
      r.fail(r.root(), "reward", e.what());
    }
  } else if (!cfg.reward.contains("command") || !cfg.reward["command"].is_string()) {
    r.fail(r.root(), "reward", "external reward needs a 'command' string");
  }

  cfg.num_samples = r.get_or<int>(root, "num_samples", cfg.num_samples);
  if (cfg.num_samples < 1) r.fail(r.root(), "num_samples", "must be >= 1");
  cfg.seed = r.get_or<std::uint64_t>(root, "seed", cfg.seed);
  cfg.num_seeds = r.get_or<int>(root, "num_seeds", cfg.num_seeds);
  if (cfg.num_seeds < 1) r.fail(r.root(), "num_seeds", "must be >= 1");
  cfg.output_dir = r.resolve(r.get_or<std::string>(root, "output_dir", cfg.output_dir.string()));

  if (root.contains("method")) {
    cfg.methods.push_back(parse_method(r, root.at("method"), cfg.num_samples, cfg.seed));
  }
  if (root.contains("methods")) {
    if (!root.at("methods").is_array()) r.fail(r.root(), "methods", "expected an array");
    for (const auto& m : root.at("methods")) cfg.methods.push_back(parse_method(r, m, cfg.num_samples, cfg.seed));
  }
  if (cfg.methods.empty()) throw ConfigError("config needs a 'method' block or a 'methods' array", 0);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

std::shared_ptr<const RewardFn> build_reward(const json& spec, const Vocabulary& vocab) {
  const std::string name = spec.at("name").get<std::string>();
  if (name == "token_count") return std::make_shared<TokenCountReward>(spec.at("target").get<Token>());
  if (name == "gated_bracket") {
    return std::make_shared<GatedBracketReward>(spec.at("open").get<Token>(), spec.at("close").get<Token>());
  }
  if (name == "pattern") return std::make_shared<PatternReward>(spec.at("pattern").get<Sequence>());
  if (name == "constant" || name == "zero") return std::make_shared<ConstantReward>(spec.value("value", 0.0));
  if (name == "external") {
    const auto fallback = std::chrono::milliseconds(static_cast<std::int64_t>(spec.value("timeout_secs", 30.0) * 1000));
    return std::make_shared<ExternalRewardClient>(spec.at("command").get<std::string>(), vocab,
                                                  reward_timeout_from_env(fallback));
  }
  throw InvalidArgument("unknown reward '" + name + "'");
}

Fixture build_fixture(const ExperimentConfig& config) {
  Fixture f;
  const bool masked = config.model.kind == NoiseKind::Masked;
  Vocabulary vocab(config.model.vocab_size, masked, config.model.glyphs);
  f.model = std::make_shared<TransitionModel>(config.model.kind, build_linear_schedule(config.model.num_steps), vocab);
  f.data = config.data;
  f.oracle = std::make_shared<OracleDenoiser>(f.model, f.data);
  if (config.denoiser == "factorized") {
    f.denoiser = std::make_shared<FactorizedDenoiser>(f.oracle);
  } else {
    f.denoiser = f.oracle;
  }
  f.reward = build_reward(config.reward, vocab);
  f.length = config.model.length;
  return f;
}

MethodOutcome run_method(const Fixture& fixture, const MethodSpec& spec, int num_samples, std::uint64_t seed) {
  const auto counter = std::make_shared<CountingDenoiser>(fixture.denoiser);
  const Denoiser& den = *counter;
  const RewardFn& reward = *fixture.reward;
  MethodOutcome out;
  Rng rng(seed, 0);
  const auto s = static_cast<std::size_t>(num_samples);
  switch (spec.method) {
    case Method::Pretrained:
      for (std::size_t i = 0; i < s; ++i) out.samples.push_back(generate(den, fixture.length, rng));
      break;
    case Method::BestOfN:
      for (std::size_t i = 0; i < s; ++i) out.samples.push_back(best_of_n(spec.baseline, den, reward, fixture.length, rng).best);
      break;
    case Method::Smc:
      while (out.samples.size() < s) {
        auto res = smc(spec.baseline, den, reward, fixture.length, rng);
        out.uniform_fallbacks += res.uniform_fallbacks;
        for (auto& p : res.particles) {
          if (out.samples.size() < s) out.samples.push_back(std::move(p));
        }
      }
      break;
    case Method::Svdd:
      for (std::size_t i = 0; i < s; ++i) {
        auto res = svdd(spec.baseline, den, reward, fixture.length, rng);
        out.uniform_fallbacks += res.uniform_fallbacks;
        out.samples.push_back(std::move(res.sample));
      }
      break;
    case Method::Csmc: {
      CsmcConfig c = spec.csmc;
      c.num_samples = num_samples;
      c.seed = seed;
      auto chain = run_chain(c, den, reward, fixture.length, rng);
      out.samples = draw_samples(chain, num_samples, c.burn_in_fraction);
      if (!chain.proposals.empty()) out.acceptance_rate = acceptance_rate(chain);
      out.reward_trace = chain.rewards;
      out.chains.push_back(std::move(chain));
      break;
    }
    case Method::CsmcBatched: {
      CsmcConfig c = spec.csmc;
      c.num_samples = num_samples;
      c.seed = seed;
      auto res = run_batched(c, den, reward, fixture.length);
      out.samples = std::move(res.samples);
      std::size_t accepted = 0;
      std::size_t proposed = 0;
      for (const auto& ch : res.chains) {
        for (const auto& p : ch.proposals) accepted += p.accepted ? 1 : 0;
        proposed += ch.proposals.size();
      }
      if (proposed > 0) out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposed);
      out.reward_trace = res.chains.front().rewards;
      out.chains = std::move(res.chains);
      break;
    }
  }
  out.nfe = counter->calls();
  out.rewards.reserve(out.samples.size());
  for (const auto& x : out.samples) out.rewards.push_back(evaluate_reward(reward, x));
  return out;
}

json write_run_outputs(const ExperimentConfig& config, const Fixture& fixture, const MethodSpec& spec,
                       const MethodOutcome& outcome, std::uint64_t seed, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Vocabulary& vocab = fixture.model->vocab();
  {
    std::ofstream samples(out_dir / "samples.csv");
    if (!samples) throw InvalidArgument("cannot write into " + out_dir.string());
    samples << "index,text,tokens,reward\n";
    for (std::size_t i = 0; i < outcome.samples.size(); ++i) {
      samples << i << ',' << csv_quote(vocab.decode(outcome.samples[i])) << ','
              << csv_quote(format_sequence(outcome.samples[i])) << ',' << format_double(outcome.rewards[i]) << '\n';
    }
  }
  const SummaryStats stats = summarize(outcome.rewards);
  json metrics;
  metrics["method"] = to_string(spec.method);
  metrics["label"] = spec.label;
  metrics["seed"] = seed;
  metrics["config"] = config.raw;
  metrics["num_samples"] = outcome.samples.size();
  metrics["mean_reward"] = stats.mean;
  metrics["std_reward"] = stats.std;
  metrics["ci95_halfwidth"] = stats.ci95_halfwidth;
  metrics["diversity"] = outcome.samples.size() >= 2 ? json(diversity(outcome.samples)) : json(nullptr);
  metrics["acceptance_rate"] = outcome.acceptance_rate ? json(*outcome.acceptance_rate) : json(nullptr);
  metrics["nfe_total"] = outcome.nfe;
  metrics["nfe_per_sample"] = static_cast<double>(outcome.nfe) / static_cast<double>(outcome.samples.size());
  metrics["uniform_fallbacks"] = outcome.uniform_fallbacks;
  {
    std::ofstream out(out_dir / "metrics.json");
    out << metrics.dump(2) << '\n';
  }
  std::vector<std::pair<std::string, double>> summary = {
      {"mean_reward", stats.mean},
      {"std_reward", stats.std},
      {"ci95_halfwidth", stats.ci95_halfwidth},
      {"num_samples", static_cast<double>(outcome.samples.size())},
      {"nfe_total", static_cast<double>(outcome.nfe)},
  };
  if (outcome.samples.size() >= 2) summary.emplace_back("diversity", diversity(outcome.samples));
  if (outcome.acceptance_rate) summary.emplace_back("acceptance_rate", *outcome.acceptance_rate);
  write_summary_csv(out_dir / "summary.csv", summary);

  if (!outcome.reward_trace.empty() && outcome.reward_trace.size() > 1) {
    const std::size_t max_lag = std::min<std::size_t>(outcome.reward_trace.size() - 1, 5000);
    write_acf_csv(out_dir / "acf.csv", autocorrelation(outcome.reward_trace, max_lag));
  }
  for (std::size_t c = 0; c < outcome.chains.size(); ++c) {
    const auto& chain = outcome.chains[c];
    std::ofstream out(out_dir / (outcome.chains.size() == 1 ? std::string("chain.csv")
                                                             : "chain_" + std::to_string(c) + ".csv"));
    out << "iteration,t,proposal,proposal_reward,accept_probability,accepted,state_reward\n";
    for (std::size_t k = 0; k < chain.proposals.size(); ++k) {
      const auto& p = chain.proposals[k];
      out << k + 1 << ',' << p.t << ',' << csv_quote(format_sequence(p.sequence)) << ',' << format_double(p.reward)
          << ',' << format_double(p.accept_probability) << ',' << (p.accepted ? 1 : 0) << ','
          << format_double(chain.rewards[k + 1]) << '\n';
    }
  }
  return metrics;
}

VerifyReport verify_fixture(const ExperimentConfig& config, const std::optional<std::filesystem::path>& export_dir) {
  const MethodSpec* spec = nullptr;
  for (const auto& m : config.methods) {
    if (m.method == Method::Csmc || m.method == Method::CsmcBatched) {
      spec = &m;
      break;
    }
  }
  if (spec == nullptr) throw ConfigError("verify needs a csmc or csmc_b method block", 0);

  const Fixture f = build_fixture(config);
  const EnumeratedSpace space(config.model.vocab_size, config.model.length);
  const Eigen::VectorXd p0 = distribution_on(space, *f.data);
  const Eigen::VectorXd rewards = reward_vector(space, *f.reward);
  const Eigen::VectorXd target = exact_target(p0, rewards, spec->csmc.beta);
  const Eigen::MatrixXd proposal = exact_proposal_kernel(space, *f.denoiser, spec->csmc);
  const Eigen::MatrixXd mh = exact_mh_kernel(proposal, rewards, spec->csmc.beta);

  // Start the limit check from the uniform law on the data support.
  Eigen::VectorXd start = (p0.array() > 0.0).cast<double>();
  start /= start.sum();

  VerifyReport report;
  report.num_states = space.size();
  report.reversibility_residual = reversibility_residual(proposal, p0);
  report.stationarity_residual = stationarity_residual(mh, target);
  report.limit_tv = tv_distance(limiting_distribution(mh, start), target);
  const Eigen::MatrixXd zero_mh = exact_mh_kernel(proposal, Eigen::VectorXd::Zero(rewards.size()), spec->csmc.beta);
  report.zero_reward_limit_tv = tv_distance(limiting_distribution(zero_mh, start), p0);
  report.passed = report.reversibility_residual < VerifyReport::kReversibilityTol &&
                  report.stationarity_residual < VerifyReport::kStationarityTol &&
                  report.limit_tv < VerifyReport::kLimitTol && report.zero_reward_limit_tv < VerifyReport::kLimitTol;

  if (export_dir) {
    std::filesystem::create_directories(*export_dir);
    write_matrix_csv(*export_dir / "proposal_kernel.csv", proposal);
    write_matrix_csv(*export_dir / "mh_kernel.csv", mh);
    write_vector_csv(*export_dir / "target.csv", target, space);
    write_vector_csv(*export_dir / "pretrained.csv", p0, space);
  }
  return report;
}

std::vector<CompareRow> run_compare(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Fixture f = build_fixture(config);
  std::vector<CompareRow> rows;
  std::ofstream runs(out_dir / "compare_runs.csv");
  runs << "label,method,seed,mean_reward,diversity,nfe_per_sample\n";
  for (const auto& spec : config.methods) {
    CompareRow row;
    row.label = spec.label;
    std::vector<double> per_seed;
    double diversity_sum = 0.0;
    double nfe_sum = 0.0;
    double acc_sum = 0.0;
    int acc_count = 0;
    for (int k = 0; k < config.num_seeds; ++k) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
      const auto outcome = run_method(f, spec, config.num_samples, seed);
      const double mean = summarize(outcome.rewards).mean;
      const double div = outcome.samples.size() >= 2 ? diversity(outcome.samples) : 0.0;
      const double nfe = static_cast<double>(outcome.nfe) / static_cast<double>(outcome.samples.size());
      per_seed.push_back(mean);
      diversity_sum += div;
      nfe_sum += nfe;
      if (outcome.acceptance_rate) {
        acc_sum += *outcome.acceptance_rate;
        ++acc_count;
      }
      runs << csv_quote(spec.label) << ',' << to_string(spec.method) << ',' << seed << ',' << format_double(mean) << ','
           << format_double(div) << ',' << format_double(nfe) << '\n';
    }
    row.per_seed_mean = summarize(per_seed);
    row.mean_reward = row.per_seed_mean.mean;
    row.mean_diversity = diversity_sum / config.num_seeds;
    row.nfe_per_sample = nfe_sum / config.num_seeds;
    if (acc_count > 0) row.acceptance_rate = acc_sum / acc_count;
    rows.push_back(row);
  }
  std::ofstream table(out_dir / "compare.csv");
  table << "label,mean_reward,ci95_halfwidth,std_over_seeds,num_seeds,diversity,nfe_per_sample,acceptance_rate\n";
  for (const auto& row : rows) {
    table << csv_quote(row.label) << ',' << format_double(row.mean_reward) << ','
          << format_double(row.per_seed_mean.ci95_halfwidth) << ',' << format_double(row.per_seed_mean.std) << ','
          << row.per_seed_mean.n << ',' << format_double(row.mean_diversity) << ','
          << format_double(row.nfe_per_sample) << ','
          << (row.acceptance_rate ? format_double(*row.acceptance_rate) : std::string()) << '\n';
  }
  return rows;
}

}  // namespace csmc
