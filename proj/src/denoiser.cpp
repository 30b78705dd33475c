#include "csmc/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace csmc {

namespace {

constexpr double kMaxLikelihoodEvaluations = 1e6;
constexpr double kMaxFactorizedSupport = 1e5;

Sequence parse_tokens(const std::string& text, const std::string& where) {
  Sequence out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<Token>(v));
    } catch (const std::exception&) {
      throw InvalidArgument(where + ": bad token '" + item + "'");
    }
  }
  if (out.empty()) {
    throw InvalidArgument(where + ": empty token list");
  }
  return out;
}

}  // namespace

DataDistribution::DataDistribution(std::vector<Sequence> support, std::vector<double> probs)
    : support_(std::move(support)), probs_(std::move(probs)) {
  if (support_.empty()) {
    throw InvalidArgument("data distribution has empty support");
  }
  if (support_.size() != probs_.size()) {
    throw InvalidArgument("data distribution support and probabilities differ in length");
  }
  const std::size_t length = support_.front().size();
  if (length == 0) {
    throw InvalidArgument("data sequences must be non-empty");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < support_.size(); ++i) {
    if (support_[i].size() != length) {
      throw InvalidArgument("data sequence " + format_sequence(support_[i]) + " has length " +
                            std::to_string(support_[i].size()) + ", expected " + std::to_string(length));
    }
    for (Token t : support_[i]) {
      if (t < 0) throw InvalidArgument("negative token in data sequence " + format_sequence(support_[i]));
    }
    if (!std::isfinite(probs_[i]) || probs_[i] < 0.0) {
      throw InvalidArgument("data probabilities must be finite and non-negative");
    }
    if (!index_.emplace(support_[i], i).second) {
      throw InvalidArgument("duplicate data sequence " + format_sequence(support_[i]));
    }
    total += probs_[i];
  }
  if (std::abs(total - 1.0) > 1e-10) {
    std::ostringstream msg;
    msg << std::setprecision(17) << "data probabilities sum to " << total << ", expected 1";
    throw InvalidArgument(msg.str());
  }
}

DataDistribution DataDistribution::from_samples(const std::vector<Sequence>& samples) {
  if (samples.empty()) {
    throw InvalidArgument("cannot build a data distribution from zero samples");
  }
  std::map<Sequence, std::size_t> counts;
  std::vector<Sequence> order;
  for (const auto& s : samples) {
    if (counts[s]++ == 0) order.push_back(s);
  }
  std::vector<double> probs;
  probs.reserve(order.size());
  for (const auto& s : order) {
    probs.push_back(static_cast<double>(counts[s]) / static_cast<double>(samples.size()));
  }
  return DataDistribution(std::move(order), std::move(probs));
}

DataDistribution DataDistribution::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("cannot open data file " + path.string());
  }
  std::vector<Sequence> support;
  std::vector<double> probs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InvalidArgument(where + ": expected prob<TAB>tokens");
    }
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidArgument(where + ": bad probability '" + line.substr(0, tab) + "'");
    }
    probs.push_back(p);
    support.push_back(parse_tokens(line.substr(tab + 1), where));
  }
  // Files store rounded decimals; accept small drift and renormalize.
  double total = 0.0;
  for (double p : probs) total += p;
  if (!probs.empty() && std::abs(total - 1.0) <= 1e-6) {
    for (double& p : probs) p /= total;
  }
  return DataDistribution(std::move(support), std::move(probs));
}

void DataDistribution::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgument("cannot write data file " + path.string());
  }
  out << std::setprecision(17);
  for (std::size_t i = 0; i < support_.size(); ++i) {
    out << probs_[i] << '\t' << format_sequence(support_[i]) << '\n';
  }
}

double DataDistribution::prob(const Sequence& x) const {
  auto it = index_.find(x);
  return it == index_.end() ? 0.0 : probs_[it->second];
}

std::vector<double> oracle_posterior(const DataDistribution& data, const TransitionModel& model,
                                     const Sequence& xt, int t) {
  if (static_cast<double>(data.size()) * static_cast<double>(data.length()) > kMaxLikelihoodEvaluations) {
    throw InvalidArgument("oracle posterior over " + std::to_string(data.size()) +
                          " sequences exceeds the enumeration guard");
  }
  if (static_cast<int>(xt.size()) != data.length()) {
    throw InvalidArgument("x_t has length " + std::to_string(xt.size()) + ", data has length " +
                          std::to_string(data.length()));
  }
  model.vocab().check(xt, false);
  if (t < 0 || t > model.num_steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " out of range");
  }
  // Per-token likelihood table: lik[a][b] = p_t(b | a).
  const int k = model.alphabet_size();
  const int v = model.vocab().size();
  std::vector<double> lik(static_cast<std::size_t>(v * k));
  for (int a = 0; a < v; ++a) {
    for (int b = 0; b < k; ++b) {
      lik[static_cast<std::size_t>(a * k + b)] = model.jump_probability(0, t, a, b);
    }
  }
  std::vector<double> weights(data.size());
  double total = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    double w = data.probs()[j];
    const Sequence& x0 = data.support()[j];
    for (std::size_t i = 0; i < xt.size() && w > 0.0; ++i) {
      w *= lik[static_cast<std::size_t>(x0[i] * k + xt[i])];
    }
    weights[j] = w;
    total += w;
  }
  if (!(total > 0.0)) {
    throw ImpossibleObservation("x_t = " + format_sequence(xt) + " at t=" + std::to_string(t) +
                                " is impossible under every data sequence");
  }
  for (double& w : weights) w /= total;
  return weights;
}

OracleDenoiser::OracleDenoiser(std::shared_ptr<const TransitionModel> model,
                               std::shared_ptr<const DataDistribution> data)
    : model_(std::move(model)), data_(std::move(data)) {
  for (const auto& x : data_->support()) {
    model_->vocab().check(x, true);
  }
}

std::vector<double> OracleDenoiser::posterior(const Sequence& xt, int t) const {
  return oracle_posterior(*data_, *model_, xt, t);
}

Sequence OracleDenoiser::sample_x0(const Sequence& xt, int t, Rng& rng) const {
  const auto weights = posterior(xt, t);
  return data_->support()[sample_weighted(weights, rng)];
}

SequenceDistribution OracleDenoiser::x0_distribution(const Sequence& xt, int t) const {
  SequenceDistribution out;
  auto weights = posterior(xt, t);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] > 0.0) {
      out.sequences.push_back(data_->support()[j]);
      out.probs.push_back(weights[j]);
    }
  }
  return out;
}

FactorizedDenoiser::FactorizedDenoiser(std::shared_ptr<const OracleDenoiser> oracle)
    : oracle_(std::move(oracle)) {}

std::vector<std::vector<double>> FactorizedDenoiser::position_marginals(const Sequence& xt, int t) const {
  const auto weights = oracle_->posterior(xt, t);
  const int v = oracle_->model().vocab().size();
  std::vector<std::vector<double>> marginals(xt.size(), std::vector<double>(static_cast<std::size_t>(v), 0.0));
  const auto& support = oracle_->data().support();
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] == 0.0) continue;
    for (std::size_t i = 0; i < xt.size(); ++i) {
      marginals[i][static_cast<std::size_t>(support[j][i])] += weights[j];
    }
  }
  return marginals;
}

Sequence FactorizedDenoiser::sample_x0(const Sequence& xt, int t, Rng& rng) const {
  const auto marginals = position_marginals(xt, t);
  Sequence x0(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) {
    x0[i] = static_cast<Token>(sample_weighted(marginals[i], rng));
  }
  return x0;
}

SequenceDistribution FactorizedDenoiser::x0_distribution(const Sequence& xt, int t) const {
  const auto marginals = position_marginals(xt, t);
  const int v = oracle_->model().vocab().size();
  if (std::pow(static_cast<double>(v), static_cast<double>(xt.size())) > kMaxFactorizedSupport) {
    throw InvalidArgument("factorized distribution too large to enumerate");
  }
  SequenceDistribution out;
  out.sequences.push_back({});
  out.probs.push_back(1.0);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    SequenceDistribution next;
    for (std::size_t j = 0; j < out.sequences.size(); ++j) {
      for (int a = 0; a < v; ++a) {
        const double p = out.probs[j] * marginals[i][static_cast<std::size_t>(a)];
        if (p == 0.0) continue;
        Sequence s = out.sequences[j];
        s.push_back(static_cast<Token>(a));
        next.sequences.push_back(std::move(s));
        next.probs.push_back(p);
      }
    }
    out = std::move(next);
  }
  return out;
}

Sequence sample_x0_prediction(const Denoiser& denoiser, const Sequence& xt, int t, Rng& rng) {
  return denoiser.sample_x0(xt, t, rng);
}

}  // namespace csmc
