#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "locker/core.hpp"
#include "locker/isotonic.hpp"
#include "support/oracles.hpp"

using namespace locker;

TEST(IsotonicFit, HandCase) {
  const std::vector<double> y{0.7, 0.2, 0.5};
  const auto f = isotonic_fit(y);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_NEAR(f[0], 0.45, 1e-15);
  EXPECT_NEAR(f[1], 0.45, 1e-15);
  EXPECT_NEAR(f[2], 0.5, 1e-15);
  const auto ref = oracle::isotonic_maxmin(y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(f[i], ref[i], 1e-12);
}

TEST(IsotonicFit, MonotoneInputIsUnchanged) {
  const std::vector<double> y{0.0, 0.1, 0.1, 0.4, 1.0};
  EXPECT_EQ(isotonic_fit(y), y);
}

TEST(IsotonicFit, MatchesMaxMinOracleOnRandomSequences) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> length(1, 20);
  std::uniform_int_distribution<int> level(0, 5);  // coarse levels force ties
  std::uniform_real_distribution<double> weight(0.2, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = length(rng);
    std::vector<double> y(n);
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) {
      y[i] = level(rng) / 5.0;
      w[i] = trial % 2 == 0 ? 1.0 : weight(rng);
    }
    const auto f = isotonic_fit(y, w);
    const auto ref = oracle::isotonic_maxmin(y, w);
    for (int i = 0; i < n; ++i) ASSERT_NEAR(f[i], ref[i], 1e-8) << "trial " << trial;
    for (int i = 1; i < n; ++i) ASSERT_LE(f[i - 1], f[i] + 1e-15);
  }
}

TEST(FitIsotonic, TiedScoresArePooledBeforeFitting) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> length(1, 20);
  std::uniform_int_distribution<int> score(0, 6);
  std::bernoulli_distribution outcome(0.4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = length(rng);
    std::vector<ScoredOutcome> pairs(n);
    std::map<double, std::pair<double, double>> pooled;  // score -> (sum, count)
    for (auto& p : pairs) {
      p.score = score(rng) / 6.0;
      p.outcome = outcome(rng) ? 1.0 : 0.0;
      pooled[p.score].first += p.outcome;
      pooled[p.score].second += 1.0;
    }
    std::vector<double> means;
    std::vector<double> weights;
    for (const auto& [s, acc] : pooled) {
      means.push_back(acc.first / acc.second);
      weights.push_back(acc.second);
    }
    const auto ref = oracle::isotonic_maxmin(means, weights);
    const auto map = fit_isotonic(pairs);
    std::size_t i = 0;
    for (const auto& [s, acc] : pooled) ASSERT_NEAR(map(s), ref[i++], 1e-8);
  }
}

TEST(FitIsotonic, EndpointsClampAndMapIsMonotone) {
  const std::vector<ScoredOutcome> pairs{{0.2, 0.0, 1}, {0.4, 1.0, 1}, {0.6, 0.0, 1}, {0.8, 1.0, 1}};
  const auto map = fit_isotonic(pairs);
  EXPECT_EQ(map(0.0), map(0.2));
  EXPECT_EQ(map(1.0), 1.0);
  EXPECT_EQ(map(0.5), 0.5);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng);
    const double b = u(rng);
    if (a > b) {
      EXPECT_GE(map(a), map(b));
    }
  }
}

TEST(FitIsotonic, DegenerateInputs) {
  const auto identity = fit_isotonic({});
  EXPECT_TRUE(identity.is_identity());
  EXPECT_EQ(identity(0.37), 0.37);
  const std::vector<ScoredOutcome> ones{{0.1, 1, 1}, {0.5, 1, 1}, {0.9, 1, 1}};
  const auto all_one = fit_isotonic(ones);
  EXPECT_EQ(all_one(0.0), 1.0);
  EXPECT_EQ(all_one(0.7), 1.0);
}

TEST(CalibrationMap, RoundTripIsExact) {
  const CalibrationMap map({0.1, 0.30000000000000004, 0.9}, {0.0, 1.0 / 3.0, 0.75});
  std::stringstream buf;
  map.write(buf);
  EXPECT_EQ(CalibrationMap::read(buf), map);
  EXPECT_THROW(CalibrationMap({0.5, 0.2}, {0.1, 0.2}), Error);
}
