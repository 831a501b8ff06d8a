#include "locker/forecast.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "locker/event_io.hpp"

namespace locker {

std::array<double, kForecastFeatureCount> ForecastFeatureRow::to_features() const {
  return {recent_deliveries[0],
          recent_deliveries[1],
          recent_deliveries[2],
          recent_deliveries[3],
          home_deliveries_ly,
          home_missing ? 1.0 : 0.0,
          first_rejection_time,
          static_cast<double>(delivery_dow),
          static_cast<double>(delivery_dom),
          static_cast<double>(ship_option)};
}

void ForecastFeatureRow::validate() const {
  const bool counts_ok = std::all_of(recent_deliveries.begin(), recent_deliveries.end(),
                                     [](double c) { return c >= 0.0; }) &&
                         home_deliveries_ly >= 0.0;
  if (!counts_ok || first_rejection_time < 0.0 || first_rejection_time > 1.0 || delivery_dow < 0 ||
      delivery_dow > 6 || delivery_dom < 1 || delivery_dom > 31 || ship_option < 1) {
    fail(ErrorKind::Data, "forecast feature row out of range");
  }
}

void HomeDeliveries::add(const std::string& zip, IsoWeek week, int ship_option, double count) {
  if (count < 0.0 || !std::isfinite(count)) {
    fail(ErrorKind::Data, fmt::format("negative home delivery count for zip {}", zip));
  }
  counts_[{zip, week.year, week.week, ship_option}] += count;
}

std::optional<double> HomeDeliveries::lookup(const std::string& zip, IsoWeek week, int ship_option) const {
  const auto it = counts_.find({zip, week.year, week.week, ship_option});
  if (it == counts_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> HomeDeliveries::week_counts(const std::string& zip, IsoWeek week,
                                                int option_count) const {
  std::vector<double> counts(option_count, 0.0);
  for (int s = 0; s < option_count; ++s) counts[s] = lookup(zip, week, s + 1).value_or(0.0);
  return counts;
}

HomeDeliveries HomeDeliveries::parse(std::istream& in, std::string_view source) {
  HomeDeliveries home;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#' || text.starts_with("zip")) continue;
    const auto fields = split_fields(text);
    if (fields.size() != 4) {
      fail(ErrorKind::Data, fmt::format("{}:{}: expected 4 fields", source, line_no));
    }
    int option = 0;
    double count = 0.0;
    auto [p1, e1] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), option);
    const std::string count_text(fields[3]);
    char* end = nullptr;
    count = std::strtod(count_text.c_str(), &end);
    if (e1 != std::errc{} || end == count_text.c_str() || *end != '\0') {
      fail(ErrorKind::Data, fmt::format("{}:{}: malformed ship_option or count", source, line_no));
    }
    home.add(std::string(fields[0]), IsoWeek::parse(fields[1]), option, count);
  }
  return home;
}

HomeDeliveries HomeDeliveries::read(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse(in, path.string());
}

void HomeDeliveries::write(std::ostream& out) const {
  out << "zip,iso_week,ship_option,count\n";
  for (const auto& [key, count] : counts_) {
    const auto& [zip, year, week, option] = key;
    out << fmt::format("{},{},{},{}\n", zip, IsoWeek{year, week}.to_string(), option, count);
  }
}

DeliveryHistory DeliveryHistory::from_events(std::span<const PackageEvent> events,
                                             const LockerConfig& config, bool count_rejected) {
  DeliveryHistory h;
  h.option_count_ = config.option_count();
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (const auto& ev : events) {
    if (!config.locker_id.empty() && ev.locker_id != config.locker_id) continue;
    lo = std::min(lo, ev.day);
    hi = std::max(hi, ev.day);
  }
  if (lo > hi) return h;
  h.empty_ = false;
  h.first_day_ = lo;
  h.last_day_ = hi;
  const std::size_t days = static_cast<std::size_t>(hi - lo + 1);
  h.deliveries_.assign(days * h.option_count_, 0.0);
  h.first_reject_.assign(days * h.option_count_, 1.0);

  std::vector<Diagnostic> ignored;
  for (const auto& order : collate_orders(events, &ignored)) {
    if (!config.locker_id.empty() && order.locker_id != config.locker_id) continue;
    const int s = config.option_index(order.ship_option);
    if (order.delivery) {
      h.deliveries_[s * days + (order.delivery->day - lo)] += 1.0;
    } else if (order.request) {
      const double frac = std::clamp(static_cast<double>(order.request->seq) /
                                         static_cast<double>(kSecondsPerDay),
                                     0.0, 1.0);
      double& slot = h.first_reject_[s * days + (order.request->day - lo)];
      slot = std::min(slot, frac);
      if (count_rejected) {
        const int d = order.request->day + config.ship_options[s].lead_days;
        if (d <= hi) h.deliveries_[s * days + (d - lo)] += 1.0;
      }
    }
  }
  return h;
}

double DeliveryHistory::deliveries(int option_index, int day) const {
  if (empty_ || day < first_day_ || day > last_day_) return 0.0;
  const std::size_t days = static_cast<std::size_t>(last_day_ - first_day_ + 1);
  return deliveries_[option_index * days + (day - first_day_)];
}

double DeliveryHistory::first_rejection_time(int option_index, int day) const {
  if (empty_ || day < first_day_ || day > last_day_) return 1.0;
  const std::size_t days = static_cast<std::size_t>(last_day_ - first_day_ + 1);
  return first_reject_[option_index * days + (day - first_day_)];
}

void ForecastWindow::validate() const {
  if (weeks < 1 || min_weeks < 1 || min_weeks > weeks || peak_first_week < 1 ||
      peak_last_week > 53 || peak_first_week > peak_last_week) {
    fail(ErrorKind::InvalidConfig, "invalid forecast training window");
  }
}

ForecastFeatureRow make_forecast_features(const DeliveryHistory& history, const HomeDeliveries& home,
                                          const Calendar& calendar, const LockerConfig& config,
                                          int run_date, int target_day, int ship_option) {
  const int s = config.option_index(ship_option);
  ForecastFeatureRow row;
  for (int k = 0; k < 4; ++k) row.recent_deliveries[k] = history.deliveries(s, target_day - 7 * (k + 1));
  const IsoWeek week = calendar.iso_week(target_day);
  const auto ly = home.lookup(config.zip, IsoWeek{week.year - 1, week.week}, ship_option);
  row.home_deliveries_ly = ly.value_or(0.0);
  row.home_missing = !ly.has_value();
  row.first_rejection_time = history.first_rejection_time(s, run_date);
  row.delivery_dow = calendar.day_of_week(target_day);
  row.delivery_dom = calendar.day_of_month(target_day);
  row.ship_option = ship_option;
  return row;
}

namespace {

std::vector<int> main_window_days(int run_date, const ForecastWindow& window) {
  std::vector<int> days;
  for (int d = run_date - 7 * window.weeks + 1; d <= run_date; ++d) days.push_back(d);
  return days;
}

std::vector<int> peak_window_days(const Calendar& calendar, int run_date, const ForecastWindow& window) {
  const int year = calendar.iso_week(run_date).year - 1;
  const int first = calendar.first_day_of({year, window.peak_first_week});
  const int last = calendar.first_day_of({year, window.peak_last_week}) + 6;
  std::vector<int> days;
  for (int d = first; d <= last; ++d) days.push_back(d);
  return days;
}

bool observable(const DeliveryHistory& history, int day, int run_date) {
  return day <= run_date && day <= history.last_day() && day - 28 >= history.first_day();
}

}  // namespace

std::vector<TrainingRow> build_training_set(const DeliveryHistory& history, const HomeDeliveries& home,
                                            const Calendar& calendar, const LockerConfig& config,
                                            int run_date, int horizon_day,
                                            const ForecastWindow& window) {
  window.validate();
  if (horizon_day < 1 || horizon_day > config.horizon_days) {
    fail(ErrorKind::InvalidConfig,
         fmt::format("horizon day {} outside 1..{}", horizon_day, config.horizon_days));
  }
  std::vector<TrainingRow> rows;
  if (history.empty()) return rows;

  std::set<int> days;
  for (int d : main_window_days(run_date, window)) {
    if (observable(history, d, run_date)) days.insert(d);
  }
  for (int d : peak_window_days(calendar, run_date, window)) {
    if (observable(history, d, run_date)) days.insert(d);
  }
  for (int d : days) {
    for (const auto& opt : config.ship_options) {
      TrainingRow row;
      row.features = make_forecast_features(history, home, calendar, config, d - horizon_day, d, opt.id);
      row.target = history.deliveries(config.option_index(opt.id), d);
      row.day = d;
      rows.push_back(row);
    }
  }
  return rows;
}

double RegressionForest::predict(const ForecastFeatureRow& row) const {
  const auto x = row.to_features();
  return forest.predict_value(x);
}

RegressionForest train_forest(std::span<const TrainingRow> rows, const ForestParams& params,
                              std::uint64_t seed, int horizon_day, Execution exec) {
  if (rows.empty()) fail(ErrorKind::Training, "cannot train a demand forest on an empty training set");
  Matrix<double> x(rows.size(), kForecastFeatureCount);
  std::vector<double> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = rows[i].features.to_features();
    std::copy(f.begin(), f.end(), x.row(i).begin());
    y[i] = rows[i].target;
  }
  return RegressionForest{Forest::train_regression(x, y, params, seed, exec), horizon_day, seed};
}

DemandForecast predict_demand(std::span<const RegressionForest> forests,
                              const Matrix<ForecastFeatureRow>& features) {
  const std::size_t horizon = features.cols();
  DemandForecast out;
  out.values = Matrix<double>(features.rows(), horizon, 0.0);
  for (std::size_t t = 1; t <= horizon; ++t) {
    const auto it = std::find_if(forests.begin(), forests.end(), [t](const RegressionForest& f) {
      return f.horizon_day == static_cast<int>(t);
    });
    if (it == forests.end()) {
      fail(ErrorKind::InvalidConfig, fmt::format("no demand forest for horizon day {}", t));
    }
    for (std::size_t s = 0; s < features.rows(); ++s) {
      out.values(s, t - 1) = std::max(0.0, it->predict(features(s, t - 1)));
    }
  }
  return out;
}

std::vector<double> proportion_rule_forecast(std::span<const double> home_counts, int capacity) {
  if (capacity < 1) fail(ErrorKind::InvalidConfig, "capacity must be >= 1");
  if (home_counts.empty()) fail(ErrorKind::InvalidConfig, "proportion rule needs at least one option");
  const double total = std::accumulate(home_counts.begin(), home_counts.end(), 0.0);
  std::vector<double> shares(home_counts.size());
  for (std::size_t s = 0; s < home_counts.size(); ++s) {
    shares[s] = total > 0.0 ? capacity * home_counts[s] / total
                            : static_cast<double>(capacity) / static_cast<double>(home_counts.size());
  }
  return shares;
}

double forecast_nmape(const DemandForecast& forecast, const Matrix<double>& actuals, int capacity) {
  if (forecast.values.rows() != actuals.rows() || forecast.values.cols() != actuals.cols()) {
    fail(ErrorKind::Data, fmt::format("forecast is {}x{} but actuals are {}x{}", forecast.values.rows(),
                                      forecast.values.cols(), actuals.rows(), actuals.cols()));
  }
  return mean_capacity_normalized_error(actuals.values(), forecast.values.values(), capacity);
}

DemandForecast proportion_demand_forecast(const HomeDeliveries& home, const Calendar& calendar,
                                          const LockerConfig& config, int run_date) {
  DemandForecast out;
  out.run_date = run_date;
  out.values = Matrix<double>(config.option_count(), config.horizon_days, 0.0);
  for (int t = 1; t <= config.horizon_days; ++t) {
    const IsoWeek week = calendar.iso_week(run_date + t);
    const auto counts = home.week_counts(config.zip, {week.year - 1, week.week}, config.option_count());
    const auto shares = proportion_rule_forecast(counts, config.capacity);
    for (int s = 0; s < config.option_count(); ++s) out.values(s, t - 1) = shares[s];
  }
  return out;
}

DemandModel DemandModel::train(const DeliveryHistory& history, const HomeDeliveries& home,
                               const Calendar& calendar, const LockerConfig& config, int run_date,
                               const ForestParams& params, std::uint64_t seed,
                               const ForecastWindow& window, Execution exec) {
  config.validate();
  DemandModel model;
  model.horizon_ = config.horizon_days;
  std::vector<std::vector<TrainingRow>> sets;
  for (int t = 1; t <= config.horizon_days; ++t) {
    auto rows = build_training_set(history, home, calendar, config, run_date, t, window);
    const int window_start = run_date - 7 * window.weeks + 1;
    std::set<int> recent_days;
    for (const auto& r : rows) {
      if (r.day >= window_start) recent_days.insert(r.day);
    }
    if (static_cast<int>(recent_days.size()) < 7 * window.min_weeks) return model;  // fallback
    sets.push_back(std::move(rows));
  }
  model.target_min_ = std::numeric_limits<double>::infinity();
  model.target_max_ = -std::numeric_limits<double>::infinity();
  for (int t = 1; t <= config.horizon_days; ++t) {
    const auto& rows = sets[t - 1];
    for (const auto& r : rows) {
      model.target_min_ = std::min(model.target_min_, r.target);
      model.target_max_ = std::max(model.target_max_, r.target);
    }
    model.forests_.push_back(train_forest(rows, params, derive_seed(seed, t), t, exec));
  }
  return model;
}

DemandForecast DemandModel::forecast(const DeliveryHistory& history, const HomeDeliveries& home,
                                     const Calendar& calendar, const LockerConfig& config,
                                     int run_date) const {
  if (uses_fallback()) return proportion_demand_forecast(home, calendar, config, run_date);
  Matrix<ForecastFeatureRow> features(config.option_count(), config.horizon_days);
  for (int s = 0; s < config.option_count(); ++s) {
    for (int t = 1; t <= config.horizon_days; ++t) {
      features(s, t - 1) = make_forecast_features(history, home, calendar, config, run_date,
                                                  run_date + t, config.ship_options[s].id);
    }
  }
  auto out = predict_demand(forests_, features);
  out.run_date = run_date;
  return out;
}

void DemandModel::write(std::ostream& out) const {
  out << "locker-demand-model v1\n";
  out << "horizon " << horizon_ << '\n';
  out << fmt::format("targets {:a} {:a}\n", target_min_, target_max_);
  out << "forests " << forests_.size() << '\n';
  for (const auto& f : forests_) {
    out << "forest " << f.horizon_day << ' ' << f.rng_seed << '\n';
    f.forest.write(out);
  }
}

DemandModel DemandModel::read(std::istream& in) {
  auto expect = [&](const char* word) {
    std::string token;
    if (!(in >> token) || token != word) {
      fail(ErrorKind::Data, fmt::format("demand model: expected '{}', found '{}'", word, token));
    }
  };
  DemandModel model;
  expect("locker-demand-model");
  expect("v1");
  expect("horizon");
  std::size_t count = 0;
  std::string lo;
  std::string hi;
  if (!(in >> model.horizon_)) fail(ErrorKind::Data, "demand model: bad horizon");
  expect("targets");
  if (!(in >> lo >> hi)) fail(ErrorKind::Data, "demand model: bad target range");
  model.target_min_ = std::strtod(lo.c_str(), nullptr);
  model.target_max_ = std::strtod(hi.c_str(), nullptr);
  expect("forests");
  if (!(in >> count)) fail(ErrorKind::Data, "demand model: bad forest count");
  for (std::size_t i = 0; i < count; ++i) {
    expect("forest");
    RegressionForest f;
    if (!(in >> f.horizon_day >> f.rng_seed)) fail(ErrorKind::Data, "demand model: bad forest header");
    f.forest = Forest::read(in);
    model.forests_.push_back(std::move(f));
  }
  return model;
}

}  // namespace locker
