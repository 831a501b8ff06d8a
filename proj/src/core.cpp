#include "locker/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

namespace locker {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidEvent: return "invalid-event";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Training: return "training";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Replay: return "replay";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(kind), message)), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void LockerConfig::validate() const {
  if (capacity < 1) {
    fail(ErrorKind::InvalidConfig,
         fmt::format("locker '{}' has capacity {} (must be >= 1)", locker_id, capacity));
  }
  if (horizon_days < 1) {
    fail(ErrorKind::InvalidConfig,
         fmt::format("locker '{}' has horizon {} (must be >= 1)", locker_id, horizon_days));
  }
  if (ship_options.empty()) {
    fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' has no ship options", locker_id));
  }
  std::set<std::string> labels;
  std::set<int> ranks;
  for (std::size_t i = 0; i < ship_options.size(); ++i) {
    const auto& opt = ship_options[i];
    if (opt.id != static_cast<int>(i) + 1) {
      fail(ErrorKind::InvalidConfig,
           fmt::format("ship option ids must be contiguous from 1 (got {} at position {})",
                       opt.id, i));
    }
    if (!labels.insert(opt.label).second) {
      fail(ErrorKind::InvalidConfig, fmt::format("duplicate ship option label '{}'", opt.label));
    }
    if (!ranks.insert(opt.speed_rank).second) {
      fail(ErrorKind::InvalidConfig,
           fmt::format("duplicate speed_rank {} for '{}'", opt.speed_rank, opt.label));
    }
    if (opt.lead_days < 0) {
      fail(ErrorKind::InvalidConfig, fmt::format("negative lead_days for '{}'", opt.label));
    }
  }
}

int LockerConfig::option_index(int option_id) const {
  if (option_id < 1 || option_id > option_count()) {
    fail(ErrorKind::InvalidEvent,
         fmt::format("unknown ship option {} for locker '{}'", option_id, locker_id));
  }
  return option_id - 1;
}

std::vector<int> LockerConfig::speed_order() const {
  std::vector<int> order(ship_options.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [this](int a, int b) {
    return std::tie(ship_options[a].speed_rank, ship_options[a].id) <
           std::tie(ship_options[b].speed_rank, ship_options[b].id);
  });
  return order;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Request: return "Request";
    case EventKind::Delivery: return "Delivery";
    case EventKind::Pickup: return "Pickup";
    case EventKind::Return: return "Return";
  }
  return "?";
}

EventKind parse_event_kind(std::string_view text) {
  if (text == "Request") return EventKind::Request;
  if (text == "Delivery") return EventKind::Delivery;
  if (text == "Pickup") return EventKind::Pickup;
  if (text == "Return") return EventKind::Return;
  fail(ErrorKind::InvalidEvent, fmt::format("unknown event kind '{}'", text));
}

bool event_before(const PackageEvent& a, const PackageEvent& b) {
  return std::tie(a.day, a.seq, a.locker_id, a.order_id, a.kind) <
         std::tie(b.day, b.seq, b.locker_id, b.order_id, b.kind);
}

void sort_events(std::vector<PackageEvent>& events) {
  std::stable_sort(events.begin(), events.end(), event_before);
}

void check_sorted(std::span<const PackageEvent> events) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    const auto& prev = events[i - 1];
    const auto& cur = events[i];
    if (std::tie(cur.day, cur.seq) < std::tie(prev.day, prev.seq)) {
      fail(ErrorKind::Ordering,
           fmt::format("event {} (order '{}', day {}, seq {}) precedes its predecessor "
                       "(day {}, seq {})",
                       i, cur.order_id, cur.day, cur.seq, prev.day, prev.seq));
    }
  }
}

int Carryover::total() const {
  const auto values = counts_.values();
  return std::accumulate(values.begin(), values.end(), 0);
}

int dwell_days(int delivery_day, int terminal_day) {
  if (terminal_day < delivery_day) {
    fail(ErrorKind::InvalidEvent,
         fmt::format("terminal day {} precedes delivery day {}", terminal_day, delivery_day));
  }
  return terminal_day - delivery_day;
}

double capacity_normalized_error(double actual, double predicted, int capacity) {
  if (capacity < 1) {
    fail(ErrorKind::InvalidConfig, fmt::format("capacity must be >= 1 (got {})", capacity));
  }
  return std::abs(actual - predicted) / static_cast<double>(capacity);
}

double mean_capacity_normalized_error(std::span<const double> actual,
                                      std::span<const double> predicted, int capacity) {
  if (actual.size() != predicted.size()) {
    fail(ErrorKind::Data, fmt::format("error metric shape mismatch: {} actual vs {} predicted",
                                      actual.size(), predicted.size()));
  }
  if (actual.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    total += capacity_normalized_error(actual[i], predicted[i], capacity);
  }
  return total / static_cast<double>(actual.size());
}

Carryover extract_carryover(std::span<const PackageEvent> events, int as_of_day,
                            const LockerConfig& config) {
  check_sorted(events);
  Carryover carry(config.option_count());

  struct Present {
    int option_index;
    int day;
  };
  std::unordered_map<std::string, Present> present;
  for (const auto& ev : events) {
    if (ev.day > as_of_day) break;
    if (!config.locker_id.empty() && ev.locker_id != config.locker_id) continue;
    switch (ev.kind) {
      case EventKind::Request:
        break;
      case EventKind::Delivery:
        present[ev.order_id] = Present{config.option_index(ev.ship_option), ev.day};
        break;
      case EventKind::Pickup:
      case EventKind::Return:
        if (present.erase(ev.order_id) == 0) {
          fail(ErrorKind::InvalidEvent,
               fmt::format("{} for order '{}' on day {} without a prior Delivery",
                           to_string(ev.kind), ev.order_id, ev.day));
        }
        break;
    }
  }
  for (const auto& [order, p] : present) {
    const int v = p.day - as_of_day;
    if (v < -kMaxDwell) continue;
    ++carry.at(p.option_index, v);
  }
  if (carry.total() > config.capacity) {
    fail(ErrorKind::Data,
         fmt::format("locker '{}' holds {} packages at end of day {} (capacity {})",
                     config.locker_id, carry.total(), as_of_day, config.capacity));
  }
  return carry;
}

std::optional<int> OrderRecord::dwell() const {
  if (!delivery || !terminal) return std::nullopt;
  return terminal->day - delivery->day;
}

std::vector<OrderRecord> collate_orders(std::span<const PackageEvent> events,
                                        std::vector<Diagnostic>* diagnostics) {
  auto report = [&](std::size_t index, const std::string& order, std::string message) {
    if (diagnostics == nullptr) {
      fail(ErrorKind::InvalidEvent,
           fmt::format("record {} (order '{}'): {}", index + 1, order, message));
    }
    diagnostics->push_back(Diagnostic{index, order, std::move(message)});
  };

  std::vector<OrderRecord> orders;
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    if (ev.seq < 0) report(i, ev.order_id, "negative within-day sequence");
    if (ev.ship_option < 1) report(i, ev.order_id, fmt::format("invalid ship option {}", ev.ship_option));
    const std::string key = ev.locker_id + '\x1f' + ev.order_id;
    auto [it, inserted] = lookup.try_emplace(key, orders.size());
    if (inserted) {
      OrderRecord rec;
      rec.locker_id = ev.locker_id;
      rec.order_id = ev.order_id;
      rec.ship_option = ev.ship_option;
      orders.push_back(std::move(rec));
    }
    OrderRecord& rec = orders[it->second];
    if (rec.ship_option != ev.ship_option) {
      report(i, ev.order_id,
             fmt::format("ship option {} conflicts with earlier {}", ev.ship_option, rec.ship_option));
    }
    const EventRef ref{i, ev.day, ev.seq, ev.kind};
    switch (ev.kind) {
      case EventKind::Request:
        if (rec.request) {
          report(i, ev.order_id, "duplicate Request");
        } else {
          rec.request = ref;
        }
        break;
      case EventKind::Delivery:
        if (rec.delivery) {
          report(i, ev.order_id, "duplicate Delivery");
        } else {
          rec.delivery = ref;
        }
        break;
      case EventKind::Pickup:
      case EventKind::Return:
        if (rec.terminal) {
          report(i, ev.order_id,
                 fmt::format("{} after an earlier {}", to_string(ev.kind), to_string(rec.terminal->kind)));
        } else {
          rec.terminal = ref;
        }
        break;
    }
  }

  auto before = [](const EventRef& a, const EventRef& b) {
    return std::tie(a.day, a.seq) < std::tie(b.day, b.seq);
  };
  for (const auto& rec : orders) {
    if (rec.request && rec.delivery && rec.delivery->day < rec.request->day) {
      report(rec.delivery->index, rec.order_id,
             fmt::format("Delivery on day {} precedes Request on day {}", rec.delivery->day,
                         rec.request->day));
    }
    if (!rec.terminal) continue;
    const auto kind = to_string(rec.terminal->kind);
    if (!rec.delivery) {
      report(rec.terminal->index, rec.order_id, fmt::format("{} without Delivery", kind));
      continue;
    }
    if (before(*rec.terminal, *rec.delivery)) {
      report(rec.terminal->index, rec.order_id, fmt::format("{} before Delivery", kind));
      continue;
    }
    const int lag = rec.terminal->day - rec.delivery->day;
    const bool is_return = rec.terminal->kind == EventKind::Return;
    const int lo = is_return ? 3 : 0;
    if (lag < lo || lag > kMaxDwell) {
      report(rec.terminal->index, rec.order_id,
             fmt::format("{} {} days after Delivery (allowed {}..{})", kind, lag, lo, kMaxDwell));
    }
  }
  return orders;
}

std::vector<Diagnostic> validate_events(std::span<const PackageEvent> events) {
  std::vector<Diagnostic> diagnostics;
  collate_orders(events, &diagnostics);
  std::sort(diagnostics.begin(), diagnostics.end(),
            [](const Diagnostic& a, const Diagnostic& b) { return a.index < b.index; });
  return diagnostics;
}

}  // namespace locker
