#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace locker {

struct IsoWeek {
  int year = 0;
  int week = 0;

  auto operator<=>(const IsoWeek&) const = default;
  std::string to_string() const;  // "2017-W26"
  static IsoWeek parse(std::string_view text);
};

// Maps integer day indices onto civil dates. Day 0 is the epoch.
class Calendar {
 public:
  Calendar();
  explicit Calendar(std::chrono::sys_days epoch) : epoch_(epoch) {}
  static Calendar from_string(std::string_view iso_date);

  std::chrono::year_month_day date(int day) const;
  int day_of_week(int day) const;  // 0 = Monday .. 6 = Sunday
  int day_of_month(int day) const;
  IsoWeek iso_week(int day) const;
  // Day index of the Monday that starts an ISO week.
  int first_day_of(IsoWeek week) const;
  std::string epoch_string() const;

 private:
  std::chrono::sys_days epoch_;
};

}  // namespace locker
