#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace locker {

struct ScoredOutcome {
  double score = 0.0;
  double outcome = 0.0;
  double weight = 1.0;
};

// Weighted least-squares non-decreasing fit of `values` in the given order
// (pool adjacent violators).
std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights = {});

// Non-decreasing step function over raw scores. Evaluation takes the value of
// the largest breakpoint <= score, clamping at both ends. An empty map is the
// identity.
class CalibrationMap {
 public:
  CalibrationMap() = default;
  CalibrationMap(std::vector<double> breakpoints, std::vector<double> values);

  double operator()(double score) const;
  bool is_identity() const { return breakpoints_.empty(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }

  void write(std::ostream& out) const;
  static CalibrationMap read(std::istream& in);
  bool operator==(const CalibrationMap&) const = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

// Pairs with equal scores are pooled first, so tied scores share one value.
CalibrationMap fit_isotonic(std::span<const ScoredOutcome> pairs);

}  // namespace locker
