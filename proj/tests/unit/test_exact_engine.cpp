#include <doctest.h>

#include <cmath>

#include "csmc/exact_engine.hpp"
#include "test_support.hpp"

using namespace csmc;
using namespace csmc::testing;

namespace {

// Strictly positive random law over the whole space, so every chain is irreducible.
std::shared_ptr<const DataDistribution> full_support(int v, int length, std::uint64_t seed) {
  const EnumeratedSpace space(v, length);
  Rng rng(seed);
  std::vector<Sequence> support;
  std::vector<double> probs;
  double total = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    support.push_back(space.at(i));
    probs.push_back(0.05 + rng.uniform());
    total += probs.back();
  }
  for (double& p : probs) p /= total;
  return table(std::move(support), std::move(probs));
}

CsmcConfig chain_config(double beta) {
  CsmcConfig c;
  c.beta = beta;
  c.reverse_steps = 2;
  return c;
}

}  // namespace

TEST_CASE("enumerated space") {
  const EnumeratedSpace s(3, 2);
  CHECK(s.size() == 9);
  CHECK(s.at(0) == Sequence{0, 0});
  CHECK(s.at(1) == Sequence{0, 1});
  CHECK(s.at(5) == Sequence{1, 2});
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.index_of(s.at(i)) == i);
  CHECK_THROWS_AS(s.index_of({0, 3}), InvalidArgument);
  CHECK_THROWS_AS(s.at(9), InvalidArgument);
  CHECK_NOTHROW(EnumeratedSpace(10, 5));
  try {
    EnumeratedSpace(10, 6);
    FAIL("expected refusal");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("space too large") != std::string::npos);
  }
}

TEST_CASE("exact target") {
  Eigen::VectorXd p0(3);
  p0 << 0.2, 0.5, 0.3;
  CHECK((exact_target(p0, Eigen::VectorXd::Constant(3, 0.7), 0.02) - p0).cwiseAbs().maxCoeff() < 1e-15);
  Eigen::VectorXd r(3);
  r << 0.0, 1.0, 0.5;
  CHECK((exact_target(p0, r, 1e9) - p0).cwiseAbs().maxCoeff() < 1e-6);

  Eigen::VectorXd two(2), r2(2);
  two << 0.75, 0.25;
  r2 << 0.0, 1.0;
  const auto t = exact_target(two, r2, 1.0);
  const double e = std::exp(1.0);
  CHECK(std::abs(t(1) - 0.25 * e / (0.75 + 0.25 * e)) < 1e-15);
  CHECK(std::abs(t(0) - 0.5246) < 1e-4);
  CHECK(std::abs(t(1) - 0.4754) < 1e-4);

  // Huge exponents stay finite.
  Eigen::VectorXd big(2);
  big << 0.0, 1000.0;
  const auto sharp = exact_target(two, big, 0.02);
  CHECK(sharp(1) == 1.0);
  CHECK(sharp.allFinite());
}

TEST_CASE("residuals and distances") {
  Eigen::VectorXd p(3);
  p << 0.2, 0.3, 0.5;
  CHECK(stationarity_residual(Eigen::MatrixXd::Identity(3, 3), p) == 0.0);
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 1.0);
  CHECK_THROWS_AS(tv_distance(std::vector<double>{1}, std::vector<double>{0, 1}), InvalidArgument);
}

TEST_CASE("proposal kernel basics") {
  for (auto kind : {NoiseKind::Masked, NoiseKind::Uniform}) {
    const auto m = model(kind, 2, 6);
    const OracleDenoiser oracle(m, full_support(2, 3, 1));
    const EnumeratedSpace space(2, 3);
    const auto q = exact_proposal_kernel(space, oracle, chain_config(1.0));
    CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(q.minCoeff() >= 0.0);

    CsmcConfig full = chain_config(1.0);
    full.t_lo = full.t_hi = 1.0;
    const auto q_full = exact_proposal_kernel(space, oracle, full);
    for (Eigen::Index a = 1; a < q_full.rows(); ++a) {
      CHECK((q_full.row(a) - q_full.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("proposal kernel matches Monte Carlo on V=2, L=2 uniform") {
  const auto m = model(NoiseKind::Uniform, 2, 6);
  const OracleDenoiser oracle(m, table({{0, 0}, {0, 1}, {1, 0}, {1, 1}}, {0.4, 0.1, 0.2, 0.3}));
  const EnumeratedSpace space(2, 2);
  const CsmcConfig c = chain_config(1.0);
  const auto q = exact_proposal_kernel(space, oracle, c);
  Rng rng(31);
  for (std::size_t a = 0; a < space.size(); ++a) {
    std::vector<Sequence> xs;
    for (int i = 0; i < 100000; ++i) xs.push_back(propose(c, oracle, space.at(a), rng).first);
    const auto f = frequencies(space, xs);
    for (std::size_t b = 0; b < space.size(); ++b) {
      CHECK(std::abs(f[b] - q(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) < 0.01);
    }
  }
}

TEST_CASE("mh kernel") {
  Eigen::MatrixXd q(2, 2);
  q << 0.6, 0.4, 0.3, 0.7;
  CHECK(exact_mh_kernel(q, Eigen::VectorXd::Zero(2), 0.5) == q);

  // q is reversible under p0 = [3/7, 4/7].
  Eigen::VectorXd p0(2), r(2);
  p0 << 3.0 / 7.0, 4.0 / 7.0;
  r << 0.2, 0.9;
  const auto p = exact_mh_kernel(q, r, 0.3);
  const auto target = exact_target(p0, r, 0.3);
  CHECK(std::abs(target(0) * p(0, 1) - target(1) * p(1, 0)) < 1e-10);
  CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  CHECK(stationarity_residual(p, target) < 1e-12);
}

TEST_CASE("reversibility, stationarity and convergence on every small fixture") {
  for (int v : {2, 3}) {
    for (int length = 1; length <= 4; ++length) {
      for (auto kind : {NoiseKind::Masked, NoiseKind::Uniform}) {
        const auto m = model(kind, v, 8);
        const auto data = full_support(v, length, static_cast<std::uint64_t>(10 * v + length));
        const OracleDenoiser oracle(m, data);
        const EnumeratedSpace space(v, length);
        const Eigen::VectorXd p0 = distribution_on(space, *data);
        const Eigen::VectorXd r = reward_vector(space, GatedBracketReward(0, 1));
        const auto q = exact_proposal_kernel(space, oracle, chain_config(1.0));
        CAPTURE(v);
        CAPTURE(length);
        CHECK(reversibility_residual(q, p0) < 1e-9);
        double last_mean = -1.0;
        for (double beta : {1.0, 0.1, 0.02}) {
          CAPTURE(beta);
          const auto target = exact_target(p0, r, beta);
          const auto p = exact_mh_kernel(q, r, beta);
          CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
          CHECK(stationarity_residual(p, target) < 1e-8);
          const Eigen::VectorXd start = Eigen::VectorXd::Constant(p0.size(), 1.0 / static_cast<double>(p0.size()));
          CHECK(tv_distance(limiting_distribution(p, start), target) < 1e-6);
          const double mean_r = target.dot(r);
          CHECK(mean_r >= last_mean - 1e-12);
          last_mean = mean_r;
        }
        const auto zero = exact_mh_kernel(q, Eigen::VectorXd::Zero(p0.size()), 0.02);
        const Eigen::VectorXd start = Eigen::VectorXd::Unit(p0.size(), 0);
        CHECK(tv_distance(limiting_distribution(zero, start), p0) < 1e-6);
      }
    }
  }
}

TEST_CASE("the factorized denoiser breaks reversibility on correlated data") {
  const auto m = model(NoiseKind::Masked, 3, 8);
  const auto data = bracket_data();
  const auto oracle = std::make_shared<OracleDenoiser>(m, data);
  const FactorizedDenoiser fact(oracle);
  const EnumeratedSpace space(3, 4);
  const auto p0 = distribution_on(space, *data);
  const auto q_exact = exact_proposal_kernel(space, *oracle, chain_config(0.1));
  const auto q_fact = exact_proposal_kernel(space, fact, chain_config(0.1));
  CHECK(reversibility_residual(q_exact, p0) < 1e-9);
  CHECK(reversibility_residual(q_fact, p0) > 1e-6);
}

TEST_CASE("dense kernel guard") {
  const auto m = model(NoiseKind::Masked, 3, 4);
  const OracleDenoiser oracle(m, table({Sequence(7, 0)}, {1.0}));
  const EnumeratedSpace space(3, 7);
  CHECK_THROWS_AS(exact_proposal_kernel(space, oracle, chain_config(1.0)), InvalidArgument);
}

TEST_CASE("empirical distribution") {
  const EnumeratedSpace s(2, 1);
  const auto e = empirical_distribution(s, {{0}, {1}, {1}, {1}});
  CHECK(e(0) == 0.25);
  CHECK(e(1) == 0.75);
}
