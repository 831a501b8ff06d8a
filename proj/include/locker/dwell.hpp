#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "locker/calendar.hpp"
#include "locker/core.hpp"
#include "locker/forest.hpp"
#include "locker/isotonic.hpp"

namespace locker {

// Columns: average, minimum and maximum dwell of the same option on the same
// weekday over the previous four weeks, ship option id, weekday, day of month.
inline constexpr int kDwellFeatureCount = 6;

struct DwellFeatureRow {
  double avg_dwell = 0.0;
  double min_dwell = 0.0;
  double max_dwell = 0.0;
  int ship_option = 1;
  int delivery_dow = 0;
  int delivery_dom = 1;

  std::array<double, kDwellFeatureCount> to_features() const;
  void validate() const;
};

struct DwellPmf {
  std::array<double, kDwellClasses> probs{};

  static DwellPmf point(int dwell);
  static DwellPmf uniform();
  // Probability that dwell >= lag; 0 beyond the last class.
  double tail(int lag) const;
  void validate() const;
  bool operator==(const DwellPmf&) const = default;
};

// p_svt for option index s, delivery day v in -6..T and horizon day t in 1..T.
class PresenceMatrix {
 public:
  PresenceMatrix() = default;
  PresenceMatrix(int option_count, int horizon);

  int option_count() const { return options_; }
  int horizon() const { return horizon_; }
  // 0 for t < v and for t - v > 6.
  double at(int option_index, int v, int t) const;
  void set(int option_index, int v, int t, double p);
  // p_s,v,v = 1, non-increasing in t, zero past lag 6, entries in [0,1].
  void validate() const;

 private:
  std::size_t index(int option_index, int v, int t) const;

  int options_ = 0;
  int horizon_ = 0;
  std::vector<double> values_;
};

// pmfs(s, v + 6) is the pmf for option index s delivered on day v in -6..T.
PresenceMatrix pmf_to_presence(const Matrix<DwellPmf>& pmfs, int horizon);
PresenceMatrix pmf_to_presence(std::span<const DwellPmf> per_option, int horizon);

// Applies each class map, then renormalizes; `fallback` is returned when the
// calibrated values are all zero.
DwellPmf calibrated_pmf(std::span<const double> raw_scores, std::span<const CalibrationMap> maps,
                        const DwellPmf& fallback);

struct DwellObservation {
  int ship_option = 0;
  int delivery_day = 0;
  int terminal_day = 0;
  int dwell = 0;
};

// Completed dwell observations of one locker.
class DwellHistory {
 public:
  DwellHistory() = default;
  // Dwells longer than six days are clamped and reported through `warnings`.
  static DwellHistory from_events(std::span<const PackageEvent> events, const LockerConfig& config,
                                  std::vector<std::string>* warnings = nullptr);

  const LockerConfig& config() const { return config_; }
  const std::vector<DwellObservation>& observations() const { return observations_; }

  // Only packages whose terminal event happened on or before `as_of` count.
  DwellFeatureRow features(const Calendar& calendar, int ship_option, int delivery_day, int as_of) const;
  int count_observed(int ship_option, int from_day, int as_of) const;

 private:
  LockerConfig config_;
  std::vector<DwellObservation> observations_;
  // (option index, delivery day) -> positions in observations_
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_day_;
};

struct DwellTrainingRow {
  DwellFeatureRow features;
  int dwell = 0;
};

struct DwellParams {
  ForestParams forest{100, 6, 20, 3};
  int folds = 3;
  int window_days = 56;
  int sparse_threshold = 10;
  bool per_option_only = false;  // collapse per-(s, v) pmfs to one pmf per option

  void validate() const;
  bool operator==(const DwellParams&) const = default;
};

// 7-class forest; leaf scores are class frequencies averaged over trees.
Forest train_dwell_classifier(std::span<const DwellTrainingRow> rows, const ForestParams& params,
                              std::uint64_t seed, Execution exec = Execution::Parallel);

// Laplace-smoothed (add-one) empirical pmf of the given dwells.
DwellPmf smoothed_pmf(std::span<const int> dwells);

// One classifier per pool of similar lockers with out-of-fold isotonic
// calibration. Lockers with few observations of an option blend the model with
// the pooled empirical pmf.
class DwellModel {
 public:
  static DwellModel train(std::span<const DwellHistory> pool, const Calendar& calendar, int run_date,
                          const DwellParams& params, std::uint64_t seed,
                          Execution exec = Execution::Parallel);

  DwellPmf pmf(const DwellHistory& locker, const Calendar& calendar, int ship_option, int delivery_day,
               int run_date) const;
  // S x (T + 7) pmfs for delivery days run_date - 6 .. run_date + T.
  Matrix<DwellPmf> pmfs(const DwellHistory& locker, const Calendar& calendar, int run_date,
                        int horizon) const;
  PresenceMatrix presence(const DwellHistory& locker, const Calendar& calendar, int run_date,
                          int horizon) const;

  bool trained() const { return trained_; }
  const Forest& forest() const { return forest_; }
  const std::array<CalibrationMap, kDwellClasses>& maps() const { return maps_; }
  const std::vector<DwellPmf>& pooled() const { return pooled_; }
  const DwellParams& params() const { return params_; }

  void write(std::ostream& out) const;
  static DwellModel read(std::istream& in);
  bool operator==(const DwellModel&) const = default;

 private:
  DwellParams params_;
  bool trained_ = false;
  Forest forest_;
  std::array<CalibrationMap, kDwellClasses> maps_;
  std::vector<DwellPmf> pooled_;  // per option index
};

// Expected terminal events on horizon days 1..T given pmfs(s, v + 6) and the
// delivery counts deliveries(s, v + 6) for v in -6..T.
std::vector<double> expected_pickups(const Matrix<DwellPmf>& pmfs, const Matrix<double>& deliveries,
                                     int horizon);

// Deliveries per (option index, v + 6) for v in -6..T, relative to run_date.
Matrix<double> delivery_counts(std::span<const PackageEvent> events, const LockerConfig& config,
                               int run_date, int horizon);
// Pickups and Returns on days run_date + 1 .. run_date + T of packages
// delivered on run_date - 6 or later.
std::vector<double> actual_pickups(std::span<const PackageEvent> events, const LockerConfig& config,
                                   int run_date, int horizon);

double pickup_error_metric(std::span<const double> expected, std::span<const double> actual, int capacity);

}  // namespace locker
