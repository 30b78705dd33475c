#include "csmc/exact_engine.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "csmc/reverse_sampler.hpp"

namespace csmc {

namespace {

// Dense N x N kernels beyond this size do not fit comfortably in memory.
constexpr std::size_t kMaxDenseStates = 4096;

void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
  }
}

// Adds weight * prod_i probs[i][z_i] to row[index(z)] for every z with nonzero mass.
void scatter_product(const std::vector<std::vector<double>>& probs, int alphabet, double weight,
                     Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  struct Frame {
    std::size_t pos;
    std::size_t index;
    double mass;
  };
  std::vector<Frame> stack{{0, 0, weight}};
  while (!stack.empty()) {
    const Frame f = stack.back();
    stack.pop_back();
    if (f.pos == probs.size()) {
      row(static_cast<Eigen::Index>(f.index)) += f.mass;
      continue;
    }
    for (int a = 0; a < alphabet; ++a) {
      const double p = probs[f.pos][static_cast<std::size_t>(a)];
      if (p == 0.0) continue;
      stack.push_back({f.pos + 1, f.index * static_cast<std::size_t>(alphabet) + static_cast<std::size_t>(a),
                       f.mass * p});
    }
  }
}

// J[y, z] = P(x_s = z | x_t = y) for one reverse jump, over the noisy space.
Eigen::MatrixXd jump_kernel(const Denoiser& denoiser, const EnumeratedSpace& noisy, int t, int s) {
  const TransitionModel& model = denoiser.model();
  const int k = model.alphabet_size();
  const auto n = static_cast<Eigen::Index>(noisy.size());
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, n);
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(noisy.length()),
                                         std::vector<double>(static_cast<std::size_t>(k)));
  for (std::size_t y = 0; y < noisy.size(); ++y) {
    const Sequence xt = noisy.at(y);
    SequenceDistribution x0s;
    try {
      x0s = denoiser.x0_distribution(xt, t);
    } catch (const ImpossibleObservation&) {
      continue;  // never reached by the reverse process
    }
    for (std::size_t j = 0; j < x0s.sequences.size(); ++j) {
      if (x0s.probs[j] == 0.0) continue;
      for (std::size_t i = 0; i < xt.size(); ++i) {
        model.posterior_between(xt[i], x0s.sequences[j][i], t, s, probs[i]);
      }
      scatter_product(probs, k, x0s.probs[j], kernel.row(static_cast<Eigen::Index>(y)));
    }
  }
  return kernel;
}

std::size_t noisy_index(const Sequence& x, int alphabet) {
  std::size_t idx = 0;
  for (Token t : x) idx = idx * static_cast<std::size_t>(alphabet) + static_cast<std::size_t>(t);
  return idx;
}

}  // namespace

EnumeratedSpace::EnumeratedSpace(int alphabet, int length) : alphabet_(alphabet), length_(length) {
  if (alphabet < 1 || length < 1) {
    throw InvalidArgument("enumerated space needs positive alphabet and length");
  }
  const double states = std::pow(static_cast<double>(alphabet), static_cast<double>(length));
  if (states > kMaxStates) {
    throw InvalidArgument("space too large to enumerate: " + std::to_string(alphabet) + "^" +
                          std::to_string(length) + " states exceeds the 1e5 guard");
  }
  size_ = static_cast<std::size_t>(std::llround(states));
}

Sequence EnumeratedSpace::at(std::size_t index) const {
  if (index >= size_) throw InvalidArgument("state index out of range");
  Sequence x(static_cast<std::size_t>(length_));
  for (int i = length_ - 1; i >= 0; --i) {
    x[static_cast<std::size_t>(i)] = static_cast<Token>(index % static_cast<std::size_t>(alphabet_));
    index /= static_cast<std::size_t>(alphabet_);
  }
  return x;
}

std::size_t EnumeratedSpace::index_of(const Sequence& x) const {
  if (static_cast<int>(x.size()) != length_) {
    throw InvalidArgument("sequence length does not match the enumerated space");
  }
  for (Token t : x) {
    if (t < 0 || t >= alphabet_) {
      throw InvalidArgument("sequence [" + format_sequence(x) + "] is outside the enumerated space");
    }
  }
  return noisy_index(x, alphabet_);
}

std::vector<Sequence> EnumeratedSpace::sequences() const {
  std::vector<Sequence> out;
  out.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) out.push_back(at(i));
  return out;
}

Eigen::VectorXd distribution_on(const EnumeratedSpace& space, const DataDistribution& data) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  for (std::size_t j = 0; j < data.size(); ++j) {
    p(static_cast<Eigen::Index>(space.index_of(data.support()[j]))) += data.probs()[j];
  }
  return p;
}

Eigen::VectorXd reward_vector(const EnumeratedSpace& space, const RewardFn& reward) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(space.size()));
  const auto seqs = space.sequences();
  const auto values = reward.batch(seqs);
  for (std::size_t i = 0; i < seqs.size(); ++i) r(static_cast<Eigen::Index>(i)) = values[i];
  return r;
}

Eigen::VectorXd exact_target(const Eigen::VectorXd& p0, const Eigen::VectorXd& rewards, double beta) {
  require_same_size(p0.size(), rewards.size(), "exact_target");
  if (!(beta > 0.0)) throw InvalidArgument("exact_target needs beta > 0");
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    if (p0(i) > 0.0) top = std::max(top, rewards(i) / beta);
  }
  if (!std::isfinite(top)) {
    throw InvalidArgument("exact_target: base distribution has no mass");
  }
  Eigen::VectorXd p(p0.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    p(i) = p0(i) > 0.0 ? p0(i) * std::exp(rewards(i) / beta - top) : 0.0;
  }
  const double z = p.sum();
  if (!(z > 0.0)) throw InvalidArgument("exact_target: zero normalizer");
  return p / z;
}

Eigen::MatrixXd exact_reverse_kernel(const Denoiser& denoiser, const EnumeratedSpace& clean, int t, int steps) {
  const TransitionModel& model = denoiser.model();
  if (clean.alphabet() != model.vocab().size()) {
    throw InvalidArgument("clean space alphabet must equal the vocabulary size");
  }
  const EnumeratedSpace noisy(model.alphabet_size(), clean.length());
  if (noisy.size() > kMaxDenseStates) {
    throw InvalidArgument("space too large for dense kernels: " + std::to_string(noisy.size()) + " noisy states");
  }
  const auto grid = reverse_grid(t, steps);
  std::vector<Eigen::Index> clean_columns(clean.size());
  for (std::size_t c = 0; c < clean.size(); ++c) {
    clean_columns[c] = static_cast<Eigen::Index>(noisy_index(clean.at(c), noisy.alphabet()));
  }
  const auto n = static_cast<Eigen::Index>(noisy.size());
  Eigen::MatrixXd result(n, static_cast<Eigen::Index>(clean.size()));
  if (grid.size() == 1) {
    // t == 0: the identity on clean states.
    result.setZero();
    for (std::size_t c = 0; c < clean.size(); ++c) result(clean_columns[c], static_cast<Eigen::Index>(c)) = 1.0;
    return result;
  }
  // Compose right to left: the last jump lands on clean states.
  const Eigen::MatrixXd last = jump_kernel(denoiser, noisy, grid[grid.size() - 2], 0);
  for (std::size_t c = 0; c < clean.size(); ++c) result.col(static_cast<Eigen::Index>(c)) = last.col(clean_columns[c]);
  for (std::size_t i = grid.size() - 2; i-- > 0;) {
    result = jump_kernel(denoiser, noisy, grid[i], grid[i + 1]) * result;
  }
  return result;
}

Eigen::MatrixXd exact_proposal_kernel(const EnumeratedSpace& clean, const Denoiser& denoiser, const CsmcConfig& config) {
  const TransitionModel& model = denoiser.model();
  const auto weights = proposal_time_weights(config, model.num_steps());
  const EnumeratedSpace noisy(model.alphabet_size(), clean.length());
  const auto c = static_cast<Eigen::Index>(clean.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(c, c);
  bool any = false;
  for (int t = 1; t <= model.num_steps(); ++t) {
    const double w = weights[static_cast<std::size_t>(t)];
    if (w == 0.0) continue;
    any = true;
    Eigen::MatrixXd forward(c, static_cast<Eigen::Index>(noisy.size()));
    for (Eigen::Index a = 0; a < c; ++a) {
      const Sequence x0 = clean.at(static_cast<std::size_t>(a));
      for (std::size_t y = 0; y < noisy.size(); ++y) {
        forward(a, static_cast<Eigen::Index>(y)) = model.sequence_likelihood(x0, noisy.at(y), t);
      }
    }
    q += w * (forward * exact_reverse_kernel(denoiser, clean, t, config.reverse_steps));
  }
  if (!any) throw InvalidArgument("proposal timestep window is empty");
  return q;
}

Eigen::MatrixXd exact_mh_kernel(const Eigen::MatrixXd& proposal, const Eigen::VectorXd& rewards, double beta) {
  require_same_size(proposal.rows(), proposal.cols(), "exact_mh_kernel");
  require_same_size(proposal.rows(), rewards.size(), "exact_mh_kernel");
  const Eigen::Index n = proposal.rows();
  Eigen::MatrixXd p(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    double off = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
      if (a == b) continue;
      p(a, b) = proposal(a, b) * acceptance(rewards(b), rewards(a), beta).probability;
      off += p(a, b);
    }
    double diag = 1.0 - off;
    if (diag < -1e-12) {
      throw InvalidArgument("MH kernel row " + std::to_string(a) + " has negative rejection mass");
    }
    p(a, a) = std::max(diag, 0.0);
  }
  return p;
}

double stationarity_residual(const Eigen::MatrixXd& transition, const Eigen::VectorXd& p) {
  require_same_size(transition.rows(), p.size(), "stationarity_residual");
  return (transition.transpose() * p - p).lpNorm<1>();
}

double reversibility_residual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& p) {
  require_same_size(kernel.rows(), p.size(), "reversibility_residual");
  const Eigen::MatrixXd flow = p.asDiagonal() * kernel;
  return (flow - flow.transpose()).cwiseAbs().maxCoeff();
}

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  require_same_size(p.size(), q.size(), "tv_distance");
  return 0.5 * (p - q).lpNorm<1>();
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  return tv_distance(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())),
                     Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size())));
}

Eigen::VectorXd limiting_distribution(const Eigen::MatrixXd& transition, const Eigen::VectorXd& start,
                                      int max_squarings) {
  require_same_size(transition.rows(), start.size(), "limiting_distribution");
  Eigen::MatrixXd power = transition;
  for (int i = 0; i < max_squarings; ++i) {
    Eigen::MatrixXd next = power * power;
    // Squaring doubles any row-sum drift; keep rows stochastic.
    const Eigen::VectorXd sums = next.rowwise().sum();
    for (Eigen::Index r = 0; r < next.rows(); ++r) {
      if (sums(r) > 0.0) next.row(r) /= sums(r);
    }
    const double change = (next - power).cwiseAbs().maxCoeff();
    power = std::move(next);
    if (change < 1e-15) break;
  }
  return power.transpose() * start;
}

Eigen::VectorXd empirical_distribution(const EnumeratedSpace& space, const std::vector<Sequence>& samples) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));
  if (samples.empty()) return p;
  for (const auto& s : samples) p(static_cast<Eigen::Index>(space.index_of(s))) += 1.0;
  return p / static_cast<double>(samples.size());
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v, const EnumeratedSpace& space) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << std::setprecision(17) << "index,tokens,value\n";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out << i << ",\"" << format_sequence(space.at(static_cast<std::size_t>(i))) << "\"," << v(i) << '\n';
  }
}

}  // namespace csmc
