#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "locker/calendar.hpp"
#include "locker/core.hpp"
#include "locker/dwell.hpp"
#include "locker/forecast.hpp"

namespace locker {

struct OptionWorkload {
  ShipOption option;
  double daily_rate = 0.0;        // mean deliveries per day
  double home_share = 0.0;        // weight in the zip's home-delivery mix
  std::vector<double> lead_pmf;   // P(request made k days before delivery)
  DwellPmf dwell;
};

struct LockerWorkload {
  std::string locker_id;
  std::string zip;
  std::string tier;
  int capacity = 1;
  std::vector<OptionWorkload> options;
  std::array<double, 7> weekday_profile{1, 1, 1, 1, 1, 1, 1};
  double weekly_volatility = 0.0;  // sd of the log weekly demand factor
  double peak_multiplier = 1.0;    // demand factor in the peak ISO weeks

  LockerConfig config() const;
};

// Deliveries are generated for days [first_day, last_day]; requests precede
// them by a draw from the option's lead-time pmf.
struct SyntheticWorkloadSpec {
  std::vector<LockerWorkload> lockers;
  int first_day = 0;
  int last_day = 6;
  int peak_first_week = 47;
  int peak_last_week = 50;
  std::uint64_t seed = 1;
  Calendar calendar;

  void validate() const;
};

// Event times within a day: requests for same-day delivery before 08:00,
// deliveries 08:00-10:00, pickups and returns from 17:00.
std::vector<PackageEvent> generate_workload(const SyntheticWorkloadSpec& spec);

// Weekly home-delivery counts per zip for every ISO week touching
// [first_day, last_day], scaled from the lockers' total volume by `scale`
// and split by home_share.
HomeDeliveries generate_home_deliveries(const SyntheticWorkloadSpec& spec, int first_day, int last_day,
                                        double scale = 20.0);

// Removes Delivery/Pickup/Return events of requests made on or before
// `history_end` that a first-come-first-served locker would have turned away
// or could not physically hold. Later requests keep all their events.
std::vector<PackageEvent> censor_history(std::span<const PackageEvent> events, const LockerConfig& config,
                                         int history_end, const std::vector<DwellPmf>& guard_pmfs);

struct BenchmarkSuite {
  SyntheticWorkloadSpec spec;
  int history_end = 0;    // plan day 0
  int window_first = 1;
  int window_last = 15;
};

// Mixed-tier benchmark: a third of the lockers heavily overloaded, a third
// moderately loaded, a third lightly loaded. Options differ in speed and
// dwell; the home-delivery mix leans toward slower options than the lockers.
BenchmarkSuite make_benchmark_suite(std::uint64_t seed, int lockers = 30);

std::vector<ShipOption> standard_ship_options();

}  // namespace locker
