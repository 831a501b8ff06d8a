#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "locker/calendar.hpp"
#include "locker/core.hpp"
#include "locker/forest.hpp"

namespace locker {

// Columns: 4 recent same-weekday delivery counts, last year's home deliveries,
// a missing flag for that value, first rejection time, weekday, day of month,
// ship option id.
inline constexpr int kForecastFeatureCount = 10;

struct ForecastFeatureRow {
  std::array<double, 4> recent_deliveries{};  // 1..4 weeks back
  double home_deliveries_ly = 0.0;
  bool home_missing = false;
  double first_rejection_time = 1.0;  // fraction of day; 1.0 = no rejection
  int delivery_dow = 0;
  int delivery_dom = 1;
  int ship_option = 1;

  std::array<double, kForecastFeatureCount> to_features() const;
  void validate() const;
};

struct TrainingRow {
  ForecastFeatureRow features;
  double target = 0.0;
  int day = 0;
};

// Weekly home-delivery counts per (zip, ISO week, ship option).
// File format: zip,iso_week,ship_option,count
class HomeDeliveries {
 public:
  void add(const std::string& zip, IsoWeek week, int ship_option, double count);
  std::optional<double> lookup(const std::string& zip, IsoWeek week, int ship_option) const;
  // Counts for options 1..option_count (0 when absent).
  std::vector<double> week_counts(const std::string& zip, IsoWeek week, int option_count) const;
  std::size_t size() const { return counts_.size(); }

  static HomeDeliveries parse(std::istream& in, std::string_view source);
  static HomeDeliveries read(const std::filesystem::path& path);
  void write(std::ostream& out) const;

 private:
  std::map<std::tuple<std::string, int, int, int>, double> counts_;
};

// Per-locker daily delivery counts and first-rejection times, indexed once
// from an event stream. A Request without a Delivery counts as rejected on the
// request day. With count_rejected, it is also added to the delivery count of
// the day it would have arrived (request day + lead_days).
class DeliveryHistory {
 public:
  static DeliveryHistory from_events(std::span<const PackageEvent> events, const LockerConfig& config,
                                     bool count_rejected = false);

  double deliveries(int option_index, int day) const;
  double first_rejection_time(int option_index, int day) const;
  bool empty() const { return empty_; }
  int first_day() const { return first_day_; }
  int last_day() const { return last_day_; }

 private:
  bool empty_ = true;
  int first_day_ = 0;
  int last_day_ = -1;
  int option_count_ = 0;
  std::vector<double> deliveries_;     // option-major, day - first_day
  std::vector<double> first_reject_;   // same layout
};

struct ForecastWindow {
  int weeks = 16;
  int min_weeks = 4;
  int peak_first_week = 47;
  int peak_last_week = 50;

  void validate() const;
};

ForecastFeatureRow make_forecast_features(const DeliveryHistory& history, const HomeDeliveries& home,
                                          const Calendar& calendar, const LockerConfig& config,
                                          int run_date, int target_day, int ship_option);

// One row per (option, day) over the recent window plus last year's peak
// weeks, restricted to days whose four-week lag features are observable.
std::vector<TrainingRow> build_training_set(const DeliveryHistory& history, const HomeDeliveries& home,
                                            const Calendar& calendar, const LockerConfig& config,
                                            int run_date, int horizon_day,
                                            const ForecastWindow& window = {});

struct RegressionForest {
  Forest forest;
  int horizon_day = 1;
  std::uint64_t rng_seed = 0;

  double predict(const ForecastFeatureRow& row) const;
  bool operator==(const RegressionForest&) const = default;
};

RegressionForest train_forest(std::span<const TrainingRow> rows, const ForestParams& params,
                              std::uint64_t seed, int horizon_day = 1,
                              Execution exec = Execution::Parallel);

// d_st: rows are ship option indices, columns horizon days 1..T.
struct DemandForecast {
  Matrix<double> values;
  int run_date = 0;

  int option_count() const { return static_cast<int>(values.rows()); }
  int horizon() const { return static_cast<int>(values.cols()); }
  double at(int option_index, int t) const { return values(option_index, t - 1); }
};

// features(s, t - 1) is the row for option index s on horizon day t.
DemandForecast predict_demand(std::span<const RegressionForest> forests,
                              const Matrix<ForecastFeatureRow>& features);

// C * home_s / sum(home); uniform C / S when every count is zero.
std::vector<double> proportion_rule_forecast(std::span<const double> home_counts, int capacity);

double forecast_nmape(const DemandForecast& forecast, const Matrix<double>& actuals, int capacity);

// The per-horizon-day forests of one locker, or the proportion-rule fallback
// when history is too short to train.
class DemandModel {
 public:
  static DemandModel train(const DeliveryHistory& history, const HomeDeliveries& home,
                           const Calendar& calendar, const LockerConfig& config, int run_date,
                           const ForestParams& params, std::uint64_t seed,
                           const ForecastWindow& window = {}, Execution exec = Execution::Parallel);

  DemandForecast forecast(const DeliveryHistory& history, const HomeDeliveries& home,
                          const Calendar& calendar, const LockerConfig& config, int run_date) const;

  bool uses_fallback() const { return forests_.empty(); }
  const std::vector<RegressionForest>& forests() const { return forests_; }
  // Smallest and largest training target across all horizon forests.
  std::pair<double, double> target_range() const { return {target_min_, target_max_}; }

  void write(std::ostream& out) const;
  static DemandModel read(std::istream& in);
  bool operator==(const DemandModel&) const = default;

 private:
  std::vector<RegressionForest> forests_;
  int horizon_ = 0;
  double target_min_ = 0.0;
  double target_max_ = 0.0;
};

DemandForecast proportion_demand_forecast(const HomeDeliveries& home, const Calendar& calendar,
                                          const LockerConfig& config, int run_date);

}  // namespace locker
