#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <vector>

#include "csmc/core.hpp"
#include "csmc/csmc_sampler.hpp"
#include "csmc/denoiser.hpp"
#include "csmc/rewards.hpp"

namespace csmc {

/// All alphabet^length sequences in lexicographic order (position 0 most significant).
class EnumeratedSpace {
 public:
  static constexpr double kMaxStates = 1e5;

  EnumeratedSpace(int alphabet, int length);

  std::size_t size() const { return size_; }
  int alphabet() const { return alphabet_; }
  int length() const { return length_; }
  Sequence at(std::size_t index) const;
  /// Throws InvalidArgument for sequences outside the space.
  std::size_t index_of(const Sequence& x) const;
  std::vector<Sequence> sequences() const;

 private:
  int alphabet_;
  int length_;
  std::size_t size_;
};

/// Probability vector of `data` over the clean space (zero off-support).
Eigen::VectorXd distribution_on(const EnumeratedSpace& space, const DataDistribution& data);
Eigen::VectorXd reward_vector(const EnumeratedSpace& space, const RewardFn& reward);

/// p_beta ∝ exp(r / beta) p0, normalized in log space.
Eigen::VectorXd exact_target(const Eigen::VectorXd& p0, const Eigen::VectorXd& rewards, double beta);

/// Exact M-step reverse kernel from every noisy state at time t to every clean
/// state: rows over the (alphabet_size)^L noisy space, columns over `clean`.
/// Rows of unreachable noisy states are zero.
Eigen::MatrixXd exact_reverse_kernel(const Denoiser& denoiser, const EnumeratedSpace& clean, int t, int steps);

/// Time-homogeneous forward-backward proposal kernel Q_prop[x0, x0'].
Eigen::MatrixXd exact_proposal_kernel(const EnumeratedSpace& clean, const Denoiser& denoiser, const CsmcConfig& config);

/// MH kernel with acceptance min(1, exp((r_b - r_a) / beta)); rejected mass on the diagonal.
Eigen::MatrixXd exact_mh_kernel(const Eigen::MatrixXd& proposal, const Eigen::VectorXd& rewards, double beta);

/// ||p^T P - p^T||_1
double stationarity_residual(const Eigen::MatrixXd& transition, const Eigen::VectorXd& p);
/// max_{a,b} |p(a) Q[a,b] - p(b) Q[b,a]|
double reversibility_residual(const Eigen::MatrixXd& kernel, const Eigen::VectorXd& p);
/// 0.5 ||p - q||_1
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

/// start^T P^n for large n, via repeated squaring until P^(2^k) stops changing.
Eigen::VectorXd limiting_distribution(const Eigen::MatrixXd& transition, const Eigen::VectorXd& start,
                                      int max_squarings = 64);

/// Empirical law of `samples` over the space.
Eigen::VectorXd empirical_distribution(const EnumeratedSpace& space, const std::vector<Sequence>& samples);

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);
void write_vector_csv(const std::filesystem::path& path, const Eigen::VectorXd& v, const EnumeratedSpace& space);

}  // namespace csmc
