#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "locker/forest.hpp"

using namespace locker;

namespace {

struct Data {
  Matrix<double> x;
  std::vector<double> y;
};

Data random_regression(std::uint64_t seed, std::size_t n, std::size_t width) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Data d{Matrix<double>(n, width), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < width; ++j) d.x(i, j) = std::floor(u(rng));
    d.y[i] = 2.0 * d.x(i, 0) - d.x(i, 1) + u(rng);
  }
  return d;
}

// Smallest and largest leaf value. Leaf means of repeated bootstrap rows can
// differ from the row value in the last bit.
std::pair<double, double> leaf_range(const DecisionTree& tree) {
  double lo = 1e300;
  double hi = -1e300;
  for (std::size_t i = 0; i < tree.leaf_count(); ++i) {
    lo = std::min(lo, tree.leaf(i)[0]);
    hi = std::max(hi, tree.leaf(i)[0]);
  }
  return {lo, hi};
}

}  // namespace

TEST(Forest, ZeroVarianceDataPredictsTheTarget) {
  Matrix<double> x(6, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    x(i, 0) = 1;
    x(i, 1) = 2;
    x(i, 2) = 3;
  }
  const std::vector<double> y(6, 4.25);
  const auto f = Forest::train_regression(x, y, {10, 8, 1, 2}, 3);
  const std::vector<double> row{1, 2, 3};
  EXPECT_EQ(f.predict_value(row), 4.25);
}

TEST(Forest, TwoClustersAreSeparated) {
  Matrix<double> x(40, 2);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    const bool high = i >= 20;
    x(i, 0) = high ? 5.0 + 0.1 * (i % 7) : 0.1 * (i % 7);
    x(i, 1) = static_cast<double>(i % 3);
    y[i] = high ? 10.0 : 0.0;
  }
  const auto f = Forest::train_regression(x, y, {50, 10, 1, 2}, 9);
  double low_mean = 0.0;
  double high_mean = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const double p = f.predict_value(x.row(i));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 10.0);
    (i >= 20 ? high_mean : low_mean) += p / 20.0;
  }
  EXPECT_NEAR(low_mean, 0.0, 0.5);
  EXPECT_NEAR(high_mean, 10.0, 0.5);
}

TEST(Forest, SameSeedIsBitIdentical) {
  const auto d = random_regression(1, 200, 5);
  const ForestParams params{30, 6, 2, 3};
  const auto a = Forest::train_regression(d.x, d.y, params, 77);
  const auto b = Forest::train_regression(d.x, d.y, params, 77);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.serialize(), b.serialize());
  const auto c = Forest::train_regression(d.x, d.y, params, 78);
  EXPECT_NE(a.serialize(), c.serialize());
}

TEST(Forest, SerialAndParallelTrainingAgree) {
  const auto d = random_regression(2, 300, 6);
  const ForestParams params{40, 8, 2, 3};
  const auto serial = Forest::train_regression(d.x, d.y, params, 5, Execution::Serial);
  const auto parallel = Forest::train_regression(d.x, d.y, params, 5, Execution::Parallel);
  EXPECT_EQ(serial, parallel);
  EXPECT_EQ(serial.predict_batch(d.x, Execution::Serial), parallel.predict_batch(d.x, Execution::Parallel));

  std::vector<int> labels(d.y.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(d.x(i, 1)) % 7;
  const auto cs = Forest::train_classification(d.x, labels, 7, params, 5, Execution::Serial);
  const auto cp = Forest::train_classification(d.x, labels, 7, params, 5, Execution::Parallel);
  EXPECT_EQ(cs, cp);
}

TEST(Forest, RowPermutationDoesNotChangeTheForest) {
  const auto d = random_regression(3, 120, 4);
  std::vector<std::size_t> perm(120);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix<double> px(120, 4);
  std::vector<double> py(120);
  for (std::size_t i = 0; i < 120; ++i) {
    for (std::size_t j = 0; j < 4; ++j) px(i, j) = d.x(perm[i], j);
    py[i] = d.y[perm[i]];
  }
  const ForestParams params{20, 6, 2, 2};
  EXPECT_EQ(Forest::train_regression(d.x, d.y, params, 8), Forest::train_regression(px, py, params, 8));
}

TEST(Forest, PredictionsStayWithinTargetRange) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto d = random_regression(100 + seed, 150, 4);
    const auto [lo, hi] = std::minmax_element(d.y.begin(), d.y.end());
    const auto f = Forest::train_regression(d.x, d.y, {25, 8, 2, 3}, seed);
    for (const auto& tree : f.trees()) {
      const auto [tlo, thi] = leaf_range(tree);
      EXPECT_GE(tlo, *lo - 1e-12);
      EXPECT_LE(thi, *hi + 1e-12);
      EXPECT_LE(tree.depth(), 8);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int k = 0; k < 100; ++k) {
      const std::vector<double> row{u(rng), u(rng), u(rng), u(rng)};
      const double p = f.predict_value(row);
      EXPECT_GE(p, *lo - 1e-12);
      EXPECT_LE(p, *hi + 1e-12);
    }
  }
}

TEST(Forest, ClassificationScoresAreDistributions) {
  const auto d = random_regression(9, 100, 3);
  std::vector<int> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<int>(d.x(i, 0)) % 7;
  const auto f = Forest::train_classification(d.x, labels, 7, {20, 5, 3, 2}, 1);
  EXPECT_EQ(f.width(), 7);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto p = f.predict(d.x.row(i));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(Forest, ArtifactRoundTrip) {
  const auto d = random_regression(5, 80, 3);
  const auto f = Forest::train_regression(d.x, d.y, {5, 4, 2, 2}, 2);
  std::stringstream buf(f.serialize());
  const auto back = Forest::read(buf);
  EXPECT_EQ(back, f);
  EXPECT_EQ(back.serialize(), f.serialize());
}

TEST(Forest, Errors) {
  Matrix<double> empty(0, 3);
  EXPECT_THROW(Forest::train_regression(empty, {}, {}, 1), Error);
  Matrix<double> one(1, 1, 0.0);
  const std::vector<double> y{1.0};
  EXPECT_THROW(Forest::train_regression(one, y, {0, 8, 2, 3}, 1), Error);
  std::istringstream junk("not a forest");
  EXPECT_THROW(Forest::read(junk), Error);
}
