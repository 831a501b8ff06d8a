#include "locker/workload.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "locker/simulate.hpp"

namespace locker {

LockerConfig LockerWorkload::config() const {
  LockerConfig c;
  c.locker_id = locker_id;
  c.capacity = capacity;
  c.zip = zip;
  for (const auto& o : options) c.ship_options.push_back(o.option);
  return c;
}

void SyntheticWorkloadSpec::validate() const {
  if (first_day > last_day) fail(ErrorKind::InvalidConfig, "workload day range is empty");
  std::set<std::string> ids;
  for (const auto& l : lockers) {
    if (!ids.insert(l.locker_id).second) fail(ErrorKind::InvalidConfig, fmt::format("duplicate locker '{}'", l.locker_id));
    l.config().validate();
    if (l.weekly_volatility < 0.0 || l.peak_multiplier < 0.0) {
      fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' has a negative volatility or peak factor", l.locker_id));
    }
    for (double w : l.weekday_profile) {
      if (w < 0.0) fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' has a negative weekday factor", l.locker_id));
    }
    for (const auto& o : l.options) {
      if (o.daily_rate < 0.0 || o.home_share < 0.0) {
        fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' option {} has a negative rate", l.locker_id, o.option.id));
      }
      if (o.lead_pmf.empty() || std::any_of(o.lead_pmf.begin(), o.lead_pmf.end(), [](double p) { return p < 0.0; }) ||
          std::accumulate(o.lead_pmf.begin(), o.lead_pmf.end(), 0.0) <= 0.0) {
        fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' option {} has an invalid lead-time pmf", l.locker_id, o.option.id));
      }
      o.dwell.validate();
    }
  }
}

namespace {

bool in_peak(const SyntheticWorkloadSpec& spec, int day) {
  const int w = spec.calendar.iso_week(day).week;
  return w >= spec.peak_first_week && w <= spec.peak_last_week;
}

void generate_locker(const SyntheticWorkloadSpec& spec, std::size_t index, std::vector<PackageEvent>& out) {
  const LockerWorkload& l = spec.lockers[index];
  std::mt19937_64 rng(derive_seed(spec.seed, index));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::int64_t> early(0, 28799);
  std::uniform_int_distribution<std::int64_t> any_time(0, 86399);
  std::uniform_int_distribution<std::int64_t> morning(28800, 35999);
  std::uniform_int_distribution<std::int64_t> evening(61200, 86399);

  std::vector<std::discrete_distribution<int>> lead;
  std::vector<std::discrete_distribution<int>> dwell;
  for (const auto& o : l.options) {
    lead.emplace_back(o.lead_pmf.begin(), o.lead_pmf.end());
    dwell.emplace_back(o.dwell.probs.begin(), o.dwell.probs.end());
  }
  const double rho = 0.5;
  std::vector<double> log_factor(l.options.size(), 0.0);
  IsoWeek week{};
  std::size_t counter = 0;
  for (int day = spec.first_day; day <= spec.last_day; ++day) {
    const IsoWeek w = spec.calendar.iso_week(day);
    if (w != week) {
      week = w;
      for (double& f : log_factor) f = rho * f + l.weekly_volatility * std::sqrt(1.0 - rho * rho) * normal(rng);
    }
    const double base = l.weekday_profile[spec.calendar.day_of_week(day)] * (in_peak(spec, day) ? l.peak_multiplier : 1.0);
    for (std::size_t s = 0; s < l.options.size(); ++s) {
      const auto& o = l.options[s];
      const double mean = o.daily_rate * base * std::exp(log_factor[s]);
      if (mean <= 0.0) continue;
      std::poisson_distribution<int> count(mean);
      const int n = count(rng);
      for (int k = 0; k < n; ++k) {
        const int lag = lead[s](rng);
        const int d = dwell[s](rng);
        const std::string id = fmt::format("{}-{:07d}", l.locker_id, counter++);
        const std::int64_t request_seq = lag == 0 ? early(rng) : any_time(rng);
        const std::int64_t delivery_seq = morning(rng);
        const std::int64_t terminal_seq = evening(rng);
        out.push_back({l.locker_id, id, EventKind::Request, o.option.id, day - lag, request_seq});
        out.push_back({l.locker_id, id, EventKind::Delivery, o.option.id, day, delivery_seq});
        out.push_back({l.locker_id, id, d >= 3 ? EventKind::Return : EventKind::Pickup, o.option.id, day + d, terminal_seq});
      }
    }
  }
}

}  // namespace

std::vector<PackageEvent> generate_workload(const SyntheticWorkloadSpec& spec) {
  spec.validate();
  std::vector<PackageEvent> events;
  for (std::size_t i = 0; i < spec.lockers.size(); ++i) generate_locker(spec, i, events);
  sort_events(events);
  return events;
}

HomeDeliveries generate_home_deliveries(const SyntheticWorkloadSpec& spec, int first_day, int last_day, double scale) {
  spec.validate();
  std::map<std::string, std::vector<const LockerWorkload*>> zips;
  for (const auto& l : spec.lockers) zips[l.zip].push_back(&l);
  std::mt19937_64 rng(derive_seed(spec.seed, 0x686f6d65));
  HomeDeliveries home;
  for (const auto& [zip, lockers] : zips) {
    double volume = 0.0;
    std::map<int, double> share;  // option id -> weight
    for (const auto* l : lockers) {
      for (const auto& o : l->options) {
        volume += o.daily_rate;
        share[o.option.id] += o.home_share;
      }
    }
    const double share_total = std::accumulate(share.begin(), share.end(), 0.0,
                                               [](double a, const auto& kv) { return a + kv.second; });
    if (share_total <= 0.0) continue;
    for (int monday = spec.calendar.first_day_of(spec.calendar.iso_week(first_day)); monday <= last_day; monday += 7) {
      const IsoWeek w = spec.calendar.iso_week(monday);
      const double peak = in_peak(spec, monday) ? lockers.front()->peak_multiplier : 1.0;
      for (const auto& [id, weight] : share) {
        const double mean = scale * volume * 7.0 * peak * weight / share_total;
        std::poisson_distribution<long> draw(std::max(mean, 1e-9));
        home.add(zip, w, id, static_cast<double>(draw(rng)));
      }
    }
  }
  return home;
}

std::vector<PackageEvent> censor_history(std::span<const PackageEvent> events, const LockerConfig& config,
                                         int history_end, const std::vector<DwellPmf>& guard_pmfs) {
  std::vector<PackageEvent> mine;
  for (const auto& ev : events) {
    if (config.locker_id.empty() || ev.locker_id == config.locker_id) mine.push_back(ev);
  }
  if (mine.empty()) return mine;
  ReplayOptions options;
  options.first_day = mine.front().day;
  options.last_day = history_end;
  options.guard_pmfs = guard_pmfs;
  Replayer r(mine, config, options, AdmissionPolicy::fcfs());
  const auto report = r.finish();
  const auto placed_ids = r.placed_orders();
  const std::set<std::string> placed(placed_ids.begin(), placed_ids.end());
  std::set<std::string> accepted;
  for (const auto& rec : report.trace) {
    if (rec.decision == Decision::Accept) accepted.insert(rec.order_id);
  }
  std::map<std::string, std::pair<int, int>> days;  // order -> (request day, delivery day)
  for (const auto& o : collate_orders(mine)) {
    if (o.request && o.delivery) days[o.order_id] = {o.request->day, o.delivery->day};
  }
  std::vector<PackageEvent> out;
  for (const auto& ev : mine) {
    const auto it = days.find(ev.order_id);
    if (ev.kind == EventKind::Request || it == days.end() || it->second.first > history_end) {
      out.push_back(ev);
      continue;
    }
    const bool keep = accepted.count(ev.order_id) > 0 && (it->second.second > history_end || placed.count(ev.order_id) > 0);
    if (keep) out.push_back(ev);
  }
  return out;
}

std::vector<ShipOption> standard_ship_options() {
  return {{1, "next-day", 0, 1}, {2, "two-day", 1, 2}, {3, "standard", 2, 4}, {4, "return", 3, 1}};
}

BenchmarkSuite make_benchmark_suite(std::uint64_t seed, int lockers) {
  if (lockers < 0) fail(ErrorKind::InvalidConfig, "locker count must be >= 0");
  BenchmarkSuite suite;
  suite.history_end = 0;
  suite.window_first = 1;
  suite.window_last = 15;
  auto& spec = suite.spec;
  spec.seed = seed;
  spec.first_day = -182;
  spec.last_day = suite.window_last + 5;

  const auto options = standard_ship_options();
  const std::array<std::vector<double>, 4> leads{{{0.3, 0.7}, {0.0, 0.3, 0.7}, {0.0, 0.0, 0.0, 0.4, 0.4, 0.2}, {0.0, 0.5, 0.5}}};
  const std::array<DwellPmf, 4> dwell{{
      {{0.40, 0.32, 0.14, 0.07, 0.04, 0.02, 0.01}},
      {{0.25, 0.30, 0.20, 0.12, 0.07, 0.04, 0.02}},
      {{0.06, 0.10, 0.16, 0.20, 0.20, 0.16, 0.12}},
      {{0.10, 0.35, 0.30, 0.15, 0.06, 0.03, 0.01}},
  }};
  const std::array<double, 4> locker_mix{0.35, 0.25, 0.30, 0.10};
  const std::array<double, 4> home_mix{0.20, 0.30, 0.38, 0.12};
  const std::array<std::pair<double, double>, 3> load{{{1.5, 1.8}, {0.6, 0.8}, {0.15, 0.22}}};
  const std::array<const char*, 3> tiers{"high", "medium", "low"};

  std::mt19937_64 rng(derive_seed(seed, 0x7375697465));
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  std::uniform_int_distribution<int> capacity(30, 60);
  for (int i = 0; i < lockers; ++i) {
    const int tier = std::min(2, i * 3 / std::max(lockers, 1));
    LockerWorkload l;
    l.locker_id = fmt::format("L{:02d}", i + 1);
    l.zip = fmt::format("{}", 98101 + i / 5);
    l.tier = tiers[tier];
    l.capacity = capacity(rng);
    l.weekday_profile = {1.10, 1.05, 1.00, 1.00, 1.10, 0.85, 0.90};
    l.weekly_volatility = 0.15;
    l.peak_multiplier = 1.3;
    std::array<double, 4> mix{};
    std::array<double, 4> home{};
    for (int s = 0; s < 4; ++s) {
      mix[s] = locker_mix[s] * jitter(rng);
      home[s] = home_mix[s] * jitter(rng);
    }
    const double mix_total = std::accumulate(mix.begin(), mix.end(), 0.0);
    double presence_days = 0.0;
    for (int s = 0; s < 4; ++s) {
      double mean_dwell = 0.0;
      for (int k = 0; k < kDwellClasses; ++k) mean_dwell += k * dwell[s].probs[k];
      presence_days += mix[s] / mix_total * (1.0 + mean_dwell);
    }
    const double target = std::uniform_real_distribution<double>(load[tier].first, load[tier].second)(rng);
    const double total_rate = target * l.capacity / presence_days;
    for (int s = 0; s < 4; ++s) {
      l.options.push_back({options[s], total_rate * mix[s] / mix_total, home[s], leads[s], dwell[s]});
    }
    spec.lockers.push_back(std::move(l));
  }
  return suite;
}

}  // namespace locker
