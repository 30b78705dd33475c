#include <doctest.h>

#include <cmath>
#include <vector>

#include "csmc/core.hpp"

using namespace csmc;

TEST_CASE("linear schedule values") {
  const auto s4 = build_linear_schedule(4);
  const std::vector<double> expected{1.0, 0.75, 0.5, 0.25, 0.0};
  CHECK(s4.values() == expected);

  const auto s1 = build_linear_schedule(1);
  CHECK(s1.values() == std::vector<double>{1.0, 0.0});

  CHECK(build_linear_schedule(10).alpha_bar(5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(build_linear_schedule(0), InvalidArgument);
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(NoiseSchedule({0.9, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5, 0.5, 0.0}), InvalidArgument);
  CHECK_NOTHROW(NoiseSchedule({1.0, 0.5, 1e-7}));
  const NoiseSchedule s({1.0, 0.5, 0.25, 0.0});
  CHECK(s.step_survival(2) == doctest::Approx(0.5));
  CHECK(s.survival_between(1, 3) == 0.0);
  CHECK(s.survival_between(0, 2) == doctest::Approx(0.25));
}

TEST_CASE("vocabulary") {
  const Vocabulary v(3, true, {{0, "("}, {1, ")"}, {2, "."}, {3, "_"}});
  CHECK(v.alphabet_size() == 4);
  CHECK(v.mask_index() == 3);
  CHECK(v.is_clean({0, 1, 2}));
  CHECK_FALSE(v.is_clean({0, 3}));
  CHECK_THROWS_AS(v.check({0, 3}, true), InvalidArgument);
  CHECK_NOTHROW(v.check({0, 3}, false));
  CHECK_THROWS_AS(v.check({4}, false), InvalidArgument);
  CHECK(v.decode({0, 0, 1, 1}) == "(())");
  CHECK(v.encode("(._)") == Sequence{0, 2, 3, 1});

  const Vocabulary plain(2, false);
  CHECK(plain.alphabet_size() == 2);
  CHECK_FALSE(plain.has_mask());
  CHECK(plain.decode({1, 0}) == "[1][0]");

  CHECK_THROWS_AS(Vocabulary(1, false), InvalidArgument);
  CHECK_THROWS_AS(Vocabulary(2, false, {{0, "a"}, {1, "a"}}), InvalidArgument);
}

TEST_CASE("categorical dist validation") {
  CHECK_NOTHROW(CategoricalDist({0.25, 0.75}));
  CHECK_THROWS_AS(CategoricalDist({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(CategoricalDist({-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(CategoricalDist({}), InvalidArgument);
}

TEST_CASE("point masses always return their index") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(sample_categorical(CategoricalDist({1.0, 0.0, 0.0}), rng) == 0);
    REQUIRE(sample_categorical(CategoricalDist({0.0, 0.0, 1.0}), rng) == 2);
  }
}

TEST_CASE("fair coin frequency") {
  Rng rng(2024);
  const CategoricalDist coin({0.5, 0.5});
  const int n = 100000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += sample_categorical(coin, rng) == 0 ? 1 : 0;
  CHECK(std::abs(zeros / double(n) - 0.5) < 0.01);
}

TEST_CASE("empirical frequencies stay inside 3 sigma") {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const int n = 50000;
    std::vector<int> counts(p.size());
    for (int i = 0; i < n; ++i) ++counts[sample_categorical(CategoricalDist(p), rng)];
    for (std::size_t k = 0; k < p.size(); ++k) {
      // 4 sigma leaves room for multiple comparisons across seeds and entries.
      CHECK(std::abs(counts[k] / double(n) - p[k]) < 4 * std::sqrt(p[k] * (1 - p[k]) / n));
    }
  }
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(7, 0), b(7, 0), c(7, 1), d(8, 0);
  bool differ_stream = false;
  bool differ_seed = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    REQUIRE(x == b.next_u64());
    differ_stream |= x != c.next_u64();
    differ_seed |= x != d.next_u64();
  }
  CHECK(differ_stream);
  CHECK(differ_seed);

  Rng u(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    REQUIRE(u.below(7) < 7);
  }
  CHECK_THROWS_AS(u.below(0), InvalidArgument);
}

TEST_CASE("sample_weighted") {
  Rng rng(5);
  const std::vector<double> w{0.0, 3.0, 1.0};
  int ones = 0;
  for (int i = 0; i < 40000; ++i) {
    const auto k = sample_weighted(w, rng);
    REQUIRE(k != 0);
    ones += k == 1 ? 1 : 0;
  }
  CHECK(std::abs(ones / 40000.0 - 0.75) < 0.01);
  CHECK_THROWS_AS(sample_weighted(std::vector<double>{0.0, 0.0}, rng), InvalidArgument);
  CHECK_THROWS_AS(sample_weighted(std::vector<double>{1.0, -1.0}, rng), InvalidArgument);
  CHECK_THROWS_AS(sample_weighted(std::vector<double>{1.0, NAN}, rng), InvalidArgument);
}

TEST_CASE("format_sequence") {
  CHECK(format_sequence({2, 0, 1}) == "2,0,1");
  CHECK(format_sequence({}) == "");
}
