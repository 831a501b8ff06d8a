#include "locker/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "locker/core.hpp"

namespace locker {

std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != values.size()) {
    fail(ErrorKind::Data, "isotonic_fit: weights and values differ in length");
  }
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (!(w > 0.0)) fail(ErrorKind::Data, "isotonic_fit: weights must be positive");
    blocks.push_back({values[i], w, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      const Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w_sum = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w_sum;
      prev.weight = w_sum;
      prev.count += top.count;
    }
  }
  std::vector<double> fitted;
  fitted.reserve(values.size());
  for (const auto& b : blocks) fitted.insert(fitted.end(), b.count, b.mean);
  return fitted;
}

CalibrationMap::CalibrationMap(std::vector<double> breakpoints, std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (breakpoints_.size() != values_.size()) {
    fail(ErrorKind::Data, "calibration map: breakpoints and values differ in length");
  }
  for (std::size_t i = 1; i < breakpoints_.size(); ++i) {
    if (!(breakpoints_[i] > breakpoints_[i - 1]) || values_[i] < values_[i - 1]) {
      fail(ErrorKind::Data, "calibration map must be strictly increasing in score and monotone");
    }
  }
}

double CalibrationMap::operator()(double score) const {
  if (breakpoints_.empty()) return score;
  const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), score);
  if (it == breakpoints_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

void CalibrationMap::write(std::ostream& out) const {
  out << "map " << breakpoints_.size() << '\n';
  for (std::size_t i = 0; i < breakpoints_.size(); ++i) {
    out << fmt::format("{:a} {:a}\n", breakpoints_[i], values_[i]);
  }
}

CalibrationMap CalibrationMap::read(std::istream& in) {
  std::string word;
  std::size_t n = 0;
  if (!(in >> word >> n) || word != "map") fail(ErrorKind::Data, "calibration map: bad header");
  std::vector<double> x(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string a;
    std::string b;
    if (!(in >> a >> b)) fail(ErrorKind::Data, "calibration map: truncated");
    x[i] = std::strtod(a.c_str(), nullptr);
    y[i] = std::strtod(b.c_str(), nullptr);
  }
  return CalibrationMap(std::move(x), std::move(y));
}

CalibrationMap fit_isotonic(std::span<const ScoredOutcome> pairs) {
  if (pairs.empty()) return {};
  std::vector<ScoredOutcome> sorted(pairs.begin(), pairs.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score < b.score; });
  std::vector<double> scores;
  std::vector<double> means;
  std::vector<double> weights;
  for (const auto& p : sorted) {
    if (!std::isfinite(p.score) || !std::isfinite(p.outcome)) {
      fail(ErrorKind::Data, "fit_isotonic: non-finite score or outcome");
    }
    if (!scores.empty() && scores.back() == p.score) {
      const double w = weights.back() + p.weight;
      means.back() = (means.back() * weights.back() + p.outcome * p.weight) / w;
      weights.back() = w;
    } else {
      scores.push_back(p.score);
      means.push_back(p.outcome);
      weights.push_back(p.weight);
    }
  }
  auto fitted = isotonic_fit(means, weights);
  for (double& v : fitted) v = std::clamp(v, 0.0, 1.0);
  // Keep one breakpoint per run of equal fitted values.
  std::vector<double> bx;
  std::vector<double> by;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (by.empty() || fitted[i] != by.back()) {
      bx.push_back(scores[i]);
      by.push_back(fitted[i]);
    }
  }
  return CalibrationMap(std::move(bx), std::move(by));
}

}  // namespace locker
