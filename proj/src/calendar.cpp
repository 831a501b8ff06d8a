#include "locker/calendar.hpp"

#include <charconv>

#include <fmt/format.h>

#include "locker/core.hpp"

namespace locker {

namespace {

using std::chrono::days;
using std::chrono::sys_days;

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(ErrorKind::Data, fmt::format("cannot parse {} from '{}'", what, text));
  }
  return value;
}

sys_days iso_week_monday(int iso_year, int week) {
  const sys_days jan4{std::chrono::year{iso_year} / std::chrono::January / 4};
  const std::chrono::weekday wd{jan4};
  const int from_monday = static_cast<int>(wd.iso_encoding()) - 1;
  return jan4 - days{from_monday} + days{7 * (week - 1)};
}

}  // namespace

std::string IsoWeek::to_string() const { return fmt::format("{:04d}-W{:02d}", year, week); }

IsoWeek IsoWeek::parse(std::string_view text) {
  const auto pos = text.find("-W");
  if (pos == std::string_view::npos) {
    fail(ErrorKind::Data, fmt::format("ISO week '{}' is not of the form YYYY-Www", text));
  }
  IsoWeek w{parse_int(text.substr(0, pos), "ISO year"), parse_int(text.substr(pos + 2), "ISO week")};
  if (w.week < 1 || w.week > 53) {
    fail(ErrorKind::Data, fmt::format("ISO week out of range in '{}'", text));
  }
  return w;
}

Calendar::Calendar() : epoch_(std::chrono::year{2018} / std::chrono::April / 14) {}

Calendar Calendar::from_string(std::string_view iso_date) {
  if (iso_date.size() != 10 || iso_date[4] != '-' || iso_date[7] != '-') {
    fail(ErrorKind::InvalidConfig, fmt::format("epoch '{}' is not YYYY-MM-DD", iso_date));
  }
  const int y = parse_int(iso_date.substr(0, 4), "year");
  const int m = parse_int(iso_date.substr(5, 2), "month");
  const int d = parse_int(iso_date.substr(8, 2), "day");
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) fail(ErrorKind::InvalidConfig, fmt::format("invalid epoch date '{}'", iso_date));
  return Calendar(sys_days{ymd});
}

std::chrono::year_month_day Calendar::date(int day) const { return {epoch_ + days{day}}; }

int Calendar::day_of_week(int day) const {
  const std::chrono::weekday wd{epoch_ + days{day}};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

int Calendar::day_of_month(int day) const {
  return static_cast<int>(static_cast<unsigned>(date(day).day()));
}

IsoWeek Calendar::iso_week(int day) const {
  const sys_days d = epoch_ + days{day};
  const sys_days thursday = d - days{day_of_week(day)} + days{3};
  const std::chrono::year_month_day thu{thursday};
  const int iso_year = static_cast<int>(thu.year());
  const sys_days jan1{thu.year() / std::chrono::January / 1};
  const int week = static_cast<int>((thursday - jan1).count()) / 7 + 1;
  return {iso_year, week};
}

int Calendar::first_day_of(IsoWeek week) const {
  return static_cast<int>((iso_week_monday(week.year, week.week) - epoch_).count());
}

std::string Calendar::epoch_string() const {
  const std::chrono::year_month_day ymd{epoch_};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

}  // namespace locker
