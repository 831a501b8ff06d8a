#include "locker/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

namespace locker {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Fcfs: return "fcfs";
    case PolicyKind::ProportionRule: return "proportion";
    case PolicyKind::Reservation: return "reservation";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "fcfs") return PolicyKind::Fcfs;
  if (text == "proportion") return PolicyKind::ProportionRule;
  if (text == "reservation") return PolicyKind::Reservation;
  fail(ErrorKind::InvalidConfig, fmt::format("unknown policy '{}' (expected fcfs, proportion, reservation)", text));
}

std::string_view to_string(Decision d) { return d == Decision::Accept ? "Accept" : "Reject"; }

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::Accepted: return "Accepted";
    case Reason::CapacityFull: return "CapacityFull";
    case Reason::LimitExhausted: return "LimitExhausted";
  }
  return "?";
}

AdmissionPolicy AdmissionPolicy::fcfs() { return {}; }

AdmissionPolicy AdmissionPolicy::proportion(std::vector<double> shares) {
  AdmissionPolicy p;
  p.kind = PolicyKind::ProportionRule;
  p.shares = std::move(shares);
  return p;
}

AdmissionPolicy AdmissionPolicy::reservation(const ReservationPlan& plan, LimitMode mode,
                                             std::vector<int> speed_rank) {
  AdmissionPolicy p;
  p.kind = PolicyKind::Reservation;
  p.mode = mode;
  p.speed_rank = std::move(speed_rank);
  for (std::size_t t = 0; t < plan.booking_limits.cols(); ++t) {
    std::vector<int> limits(plan.booking_limits.rows());
    for (std::size_t s = 0; s < limits.size(); ++s) limits[s] = plan.booking_limits(s, t);
    p.limits_by_day[plan.run_date + static_cast<int>(t) + 1] = std::move(limits);
    double used = 0.0;
    for (std::size_t s = 0; s < plan.x.rows(); ++s) used += plan.x(s, t);
    if (plan.capacity <= 0 || used >= plan.capacity - 1e-6) p.binding_days.insert(plan.run_date + static_cast<int>(t) + 1);
  }
  return p;
}

void AdmissionPolicy::validate(int option_count) const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidConfig, msg); };
  if (kind == PolicyKind::ProportionRule) {
    if (shares.empty() && shares_by_day.empty()) bad("proportion policy has no shares");
    if (!shares.empty() && static_cast<int>(shares.size()) != option_count) bad("proportion shares do not match options");
    for (const auto& [day, row] : shares_by_day) {
      if (static_cast<int>(row.size()) != option_count) bad(fmt::format("proportion shares for day {} do not match options", day));
    }
  }
  if (kind == PolicyKind::Reservation) {
    for (const auto& [day, row] : limits_by_day) {
      if (static_cast<int>(row.size()) != option_count) bad(fmt::format("booking limits for day {} do not match options", day));
      for (int v : row) {
        if (v < 0) bad(fmt::format("negative booking limit on day {}", day));
      }
    }
    if (!speed_rank.empty() && static_cast<int>(speed_rank.size()) != option_count) {
      bad("speed ranks do not match options");
    }
  }
}

LockerState::LockerState(int option_count, int capacity) : options_(option_count), capacity_(capacity) {}

int LockerState::accepted(int s, int delivery_day) const {
  const auto it = accepted_.find({delivery_day, s});
  return it == accepted_.end() ? 0 : it->second;
}

double LockerState::projected_occupancy(int day, const OccupancyGuard& guard, int option_index) const {
  double total = 0.0;
  for (const auto& [id, o] : occupants_) {
    if (option_index >= 0 && o.option_index != option_index) continue;
    const int lag = day - o.delivery_day;
    if (lag > kMaxDwell) continue;
    const DwellPmf& q = guard.pmfs[o.option_index];
    const double now = q.tail(day_ - o.delivery_day);
    total += now > 0.0 ? std::min(1.0, q.tail(lag) / now) : 1.0;
  }
  for (auto it = awaiting_.lower_bound({day - kMaxDwell, 0}); it != awaiting_.end() && it->first.first <= day; ++it) {
    const auto [d, s] = it->first;
    if (option_index >= 0 && s != option_index) continue;
    total += it->second * guard.pmfs[s].tail(day - d);
  }
  return total;
}

Carryover LockerState::carryover() const {
  Carryover c(options_);
  for (const auto& [id, o] : occupants_) {
    const int v = o.delivery_day - day_;
    if (v >= -kMaxDwell && v <= 0) ++c.at(o.option_index, v);
  }
  return c;
}

void LockerState::accept(const std::string&, int s, int delivery_day) {
  ++accepted_[{delivery_day, s}];
  ++awaiting_[{delivery_day, s}];
}

void LockerState::expire_awaiting(const std::string&, int s, int delivery_day) {
  const auto it = awaiting_.find({delivery_day, s});
  if (it == awaiting_.end()) return;
  if (--it->second == 0) awaiting_.erase(it);
}

bool LockerState::place(const std::string& order_id, int s, int delivery_day) {
  expire_awaiting(order_id, s, delivery_day);
  if (occupancy() >= capacity_) return false;
  occupants_[order_id] = Occupant{s, delivery_day};
  return true;
}

void LockerState::remove(const std::string& order_id) { occupants_.erase(order_id); }

namespace {

DecisionRecord base_record(const AdmissionRequest& r) {
  DecisionRecord rec;
  rec.order_id = r.order_id;
  rec.day = r.day;
  rec.delivery_day = r.delivery_day;
  rec.ship_option = r.option_index + 1;
  return rec;
}

DecisionRecord with_outcome(DecisionRecord rec, Reason reason) {
  rec.reason = reason;
  rec.decision = reason == Reason::Accepted ? Decision::Accept : Decision::Reject;
  return rec;
}

}  // namespace

DecisionRecord fcfs_decide(const LockerState& state, const AdmissionRequest& request, const OccupancyGuard& guard) {
  const double projected = state.projected_occupancy(request.delivery_day, guard);
  return with_outcome(base_record(request),
                      projected < guard.capacity_limit ? Reason::Accepted : Reason::CapacityFull);
}

DecisionRecord reservation_decide(const LockerState& state, const AdmissionRequest& request,
                                  const AdmissionPolicy& policy, const OccupancyGuard& guard) {
  const auto it = policy.limits_by_day.find(request.delivery_day);
  if (it == policy.limits_by_day.end()) {
    auto rec = fcfs_decide(state, request, guard);
    rec.outside_plan = true;
    return rec;
  }
  const auto& limits = it->second;
  const int s = request.option_index;
  const double projected = state.projected_occupancy(request.delivery_day, guard);
  if (state.accepted(s, request.delivery_day) < limits[s]) {
    return with_outcome(base_record(request),
                        projected < guard.capacity_limit ? Reason::Accepted : Reason::CapacityFull);
  }
  if (policy.mode == LimitMode::Nested && projected < guard.capacity_limit) {
    // Past the limit, a request may take any space not still reserved for
    // faster options on the days the package is expected to stay.
    const int D = request.delivery_day;
    bool fits = true;
    for (int u = D; u <= D + kMaxDwell && fits; ++u) {
      if (policy.binding_days.count(u) == 0) continue;
      double reserved = 0.0;
      for (auto lim = policy.limits_by_day.lower_bound(std::max(state.day(), u - kMaxDwell));
           lim != policy.limits_by_day.end() && lim->first <= u; ++lim) {
        for (int o = 0; o < static_cast<int>(lim->second.size()); ++o) {
          if (o == s || (!policy.speed_rank.empty() && policy.speed_rank[o] >= policy.speed_rank[s])) continue;
          const int unused = std::max(0, lim->second[o] - state.accepted(o, lim->first));
          reserved += unused * guard.pmfs[o].tail(u - lim->first);
        }
      }
      if (reserved > 0.0) {
        fits = state.projected_occupancy(u, guard) + guard.pmfs[s].tail(u - D) + reserved < guard.capacity_limit;
      }
    }
    if (fits) return with_outcome(base_record(request), Reason::Accepted);
  }
  return with_outcome(base_record(request), Reason::LimitExhausted);
}

DecisionRecord proportion_decide(const LockerState& state, const AdmissionRequest& request,
                                 const AdmissionPolicy& policy, const OccupancyGuard& guard) {
  const auto it = policy.shares_by_day.find(request.delivery_day);
  const auto& shares = it != policy.shares_by_day.end() ? it->second : policy.shares;
  const int s = request.option_index;
  if (state.projected_occupancy(request.delivery_day, guard, s) >= shares[s]) {
    return with_outcome(base_record(request), Reason::LimitExhausted);
  }
  return fcfs_decide(state, request, guard);
}

DecisionRecord decide(const LockerState& state, const AdmissionRequest& request, const AdmissionPolicy& policy,
                      const OccupancyGuard& guard) {
  switch (policy.kind) {
    case PolicyKind::Fcfs: return fcfs_decide(state, request, guard);
    case PolicyKind::ProportionRule: return proportion_decide(state, request, policy, guard);
    case PolicyKind::Reservation: return reservation_decide(state, request, policy, guard);
  }
  return fcfs_decide(state, request, guard);
}

bool SimulationReport::operator==(const SimulationReport& o) const {
  auto snap_eq = [](const OccupancySnapshot& a, const OccupancySnapshot& b) {
    return a.day == b.day && a.total == b.total && a.per_option_counts == b.per_option_counts;
  };
  return policy == o.policy && locker_id == o.locker_id && total_requests == o.total_requests &&
         accepted == o.accepted && rejected == o.rejected && throughput == o.throughput &&
         overflowed == o.overflowed && beyond_window == o.beyond_window && missing_delivery == o.missing_delivery &&
         unjustified_rejections == o.unjustified_rejections && max_occupancy == o.max_occupancy &&
         trace == o.trace && std::equal(daily.begin(), daily.end(), o.daily.begin(), o.daily.end(), snap_eq);
}

Replayer::Replayer(std::span<const PackageEvent> events, const LockerConfig& config, const ReplayOptions& options,
                   AdmissionPolicy policy, std::string policy_name)
    : config_(config), options_(options), policy_(std::move(policy)) {
  config_.validate();
  policy_.validate(config_.option_count());
  if (options_.safety_margin < 0.0 || options_.safety_margin > 1.0) {
    fail(ErrorKind::InvalidConfig, "safety margin must lie in [0,1]");
  }
  if (options_.first_day > options_.last_day) fail(ErrorKind::InvalidConfig, "replay window is empty");
  for (const auto& ev : events) {
    if (config_.locker_id.empty() || ev.locker_id == config_.locker_id) events_.push_back(ev);
  }
  check_sorted(events_);

  std::vector<Diagnostic> diagnostics;
  const auto orders = collate_orders(events_, &diagnostics);
  if (!diagnostics.empty()) {
    const auto& d = diagnostics.front();
    const auto& ev = events_[d.index];
    fail(ErrorKind::Replay, fmt::format("record {} ({} for order '{}', day {}): {}", d.index + 1, to_string(ev.kind),
                                        d.order_id, ev.day, d.message));
  }
  for (const auto& o : orders) {
    if (!o.request) {
      const auto& first = o.delivery ? *o.delivery : *o.terminal;
      fail(ErrorKind::Replay, fmt::format("record {} ({} for order '{}', day {}): no Request for this order",
                                          first.index + 1, to_string(first.kind), o.order_id, first.day));
    }
    OrderInfo info;
    info.option_index = config_.option_index(o.ship_option);
    info.request_day = o.request->day;
    info.recorded_delivery = o.delivery.has_value();
    info.delivery_day = o.delivery ? o.delivery->day
                                   : o.request->day + config_.ship_options[info.option_index].lead_days;
    info.in_window = info.request_day >= options_.first_day && info.request_day <= options_.last_day;
    orders_.emplace(o.order_id, info);
  }

  guard_.pmfs = options_.guard_pmfs;
  if (guard_.pmfs.empty()) guard_.pmfs.assign(config_.option_count(), DwellPmf::uniform());
  if (static_cast<int>(guard_.pmfs.size()) != config_.option_count()) {
    fail(ErrorKind::InvalidConfig, "guard pmfs do not match the ship options");
  }
  for (const auto& q : guard_.pmfs) q.validate();
  guard_.capacity_limit = config_.capacity - options_.safety_margin;

  state_ = LockerState(config_.option_count(), config_.capacity);
  report_.policy = policy_name.empty() ? std::string(to_string(policy_.kind)) : std::move(policy_name);
  report_.locker_id = config_.locker_id;
  const bool bounded = options_.first_day > std::numeric_limits<int>::min() / 2;
  int start = bounded ? options_.first_day : options_.last_day;
  if (!events_.empty()) start = bounded ? std::min(start, events_.front().day) : events_.front().day;
  if (events_.empty() && !bounded && options_.last_day >= std::numeric_limits<int>::max() / 2) start = 0;
  state_.set_day(start - 1);
}

void Replayer::set_policy(AdmissionPolicy policy) {
  policy.validate(config_.option_count());
  policy_ = std::move(policy);
}

void Replayer::start_day(int day) {
  if (planner_ != nullptr && day >= options_.first_day && day <= options_.last_day) {
    set_policy(planner_->plan(day - 1, state_));
  }
  state_.set_day(day);
  for (auto& [id, info] : orders_) {
    if (info.status == OrderInfo::Status::Awaiting && !info.recorded_delivery && info.delivery_day < day) {
      state_.expire_awaiting(id, info.option_index, info.delivery_day);
      info.status = OrderInfo::Status::Gone;
    }
  }
  day_open_ = true;
  peak_today_ = state_.occupancy();
}

void Replayer::end_day() {
  const int day = state_.day();
  if (day >= options_.first_day && day <= options_.last_day) {
    OccupancySnapshot snap;
    snap.day = day;
    snap.total = peak_today_;
    report_.daily.push_back(std::move(snap));
  }
  day_open_ = false;
}

void Replayer::handle(const PackageEvent& ev) {
  auto it = orders_.find(ev.order_id);
  if (it == orders_.end()) {
    fail(ErrorKind::Replay, fmt::format("order '{}' on day {} has no Request", ev.order_id, ev.day));
  }
  OrderInfo& info = it->second;
  using Status = OrderInfo::Status;
  switch (ev.kind) {
    case EventKind::Request: {
      if (!info.in_window) {
        if (info.recorded_delivery) {
          state_.accept(ev.order_id, info.option_index, info.delivery_day);
          info.status = Status::Awaiting;
        } else {
          info.status = Status::Rejected;
        }
        return;
      }
      const AdmissionRequest req{ev.order_id, info.option_index, ev.day, ev.seq, info.delivery_day};
      DecisionRecord rec = decide(state_, req, policy_, guard_);
      ++report_.total_requests;
      if (rec.decision == Decision::Accept) {
        ++report_.accepted;
        state_.accept(ev.order_id, info.option_index, info.delivery_day);
        info.status = Status::Awaiting;
      } else {
        ++report_.rejected;
        info.status = Status::Rejected;
      }
      info.trace_index = report_.trace.size();
      report_.trace.push_back(std::move(rec));
      return;
    }
    case EventKind::Delivery:
      if (info.status != Status::Awaiting) return;
      if (state_.place(ev.order_id, info.option_index, ev.day)) {
        info.status = Status::Placed;
        info.placed = true;
        info.placed_day = ev.day;
        peak_today_ = std::max(peak_today_, state_.occupancy());
        report_.max_occupancy = std::max(report_.max_occupancy, state_.occupancy());
      } else {
        info.status = Status::Overflowed;
      }
      if (state_.occupancy() > config_.capacity) {
        fail(ErrorKind::Replay, fmt::format("occupancy {} exceeds capacity {} on day {}", state_.occupancy(),
                                            config_.capacity, ev.day));
      }
      return;
    case EventKind::Pickup:
    case EventKind::Return:
      if (info.status != Status::Placed) return;
      state_.remove(ev.order_id);
      info.status = Status::Gone;
      info.left_day = ev.day;
      return;
  }
}

void Replayer::run_through(int day) {
  const int target = std::min(day, options_.last_day);
  while (true) {
    const bool more_events = cursor_ < events_.size() && events_[cursor_].day <= target;
    if (!day_open_) {
      if (state_.day() >= target && !more_events) break;
      start_day(state_.day() + 1);
    }
    while (cursor_ < events_.size() && events_[cursor_].day == state_.day()) handle(events_[cursor_++]);
    if (state_.day() >= target) break;
    end_day();
  }
}

SimulationReport Replayer::finish() {
  const auto started = std::chrono::steady_clock::now();
  if (options_.last_day < std::numeric_limits<int>::max() / 2) {
    run_through(options_.last_day);
  } else if (!events_.empty()) {
    run_through(events_.back().day);
  }
  if (day_open_) end_day();

  using Status = OrderInfo::Status;
  for (const auto& [id, info] : orders_) {
    if (!info.in_window || info.status == Status::Rejected) continue;
    if (!info.recorded_delivery) {
      ++report_.missing_delivery;
    } else if (info.delivery_day > options_.last_day) {
      ++report_.beyond_window;
    } else if (info.status == Status::Overflowed) {
      ++report_.overflowed;
    } else if (info.placed) {
      ++report_.throughput;
    } else {
      ++report_.missing_delivery;
    }
  }

  // Hindsight: packages physically present per day.
  std::map<int, int> present;
  const int last_seen = state_.day();
  for (const auto& [id, info] : orders_) {
    if (!info.placed) continue;
    const int until = info.status == Status::Placed ? last_seen : info.left_day;
    for (int d = info.placed_day; d <= until; ++d) ++present[d];
  }
  for (auto& rec : report_.trace) {
    if (rec.decision != Decision::Reject || rec.delivery_day > last_seen) continue;
    const auto it = present.find(rec.delivery_day);
    const int occupied = it == present.end() ? 0 : it->second;
    rec.hindsight_space_available = occupied + 1 <= config_.capacity;
    if (rec.hindsight_space_available) ++report_.unjustified_rejections;
  }
  report_.runtime_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report_;
}

std::vector<std::string> Replayer::placed_orders() const {
  std::vector<std::string> ids;
  for (const auto& [id, info] : orders_) {
    if (info.placed) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

SimulationReport replay(std::span<const PackageEvent> events, const AdmissionPolicy& policy, const LockerConfig& config,
                        const ReplayOptions& options, Planner* planner, const std::string& policy_name) {
  const auto started = std::chrono::steady_clock::now();
  Replayer r(events, config, options, policy, policy_name);
  r.set_planner(planner);
  auto report = r.finish();
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

double agreement(std::span<const DecisionRecord> trace, std::span<const DecisionRecord> reference) {
  if (reference.empty()) return 1.0;
  std::unordered_map<std::string, Decision> decided;
  for (const auto& r : trace) decided.emplace(r.order_id, r.decision);
  std::size_t same = 0;
  for (const auto& r : reference) {
    const auto it = decided.find(r.order_id);
    if (it != decided.end() && it->second == r.decision) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(reference.size());
}

std::vector<DecisionRecord> decisions_from_log(std::span<const PackageEvent> events, const LockerConfig& config,
                                               int first_day, int last_day) {
  std::vector<Diagnostic> ignored;
  std::vector<DecisionRecord> out;
  for (const auto& o : collate_orders(events, &ignored)) {
    if (!config.locker_id.empty() && o.locker_id != config.locker_id) continue;
    if (!o.request || o.request->day < first_day || o.request->day > last_day) continue;
    DecisionRecord rec;
    rec.order_id = o.order_id;
    rec.day = o.request->day;
    rec.ship_option = o.ship_option;
    rec.delivery_day = o.delivery ? o.delivery->day : o.request->day;
    rec.decision = o.delivery ? Decision::Accept : Decision::Reject;
    rec.reason = o.delivery ? Reason::Accepted : Reason::CapacityFull;
    out.push_back(std::move(rec));
  }
  return out;
}

double uplift_pct(int throughput, int baseline) {
  if (baseline == 0) return throughput == 0 ? 0.0 : 100.0;
  return 100.0 * (throughput - baseline) / static_cast<double>(baseline);
}

PolicyComparison compare_policies(std::span<const PackageEvent> events, std::span<const PolicySetup> policies,
                                  const LockerConfig& config, const ReplayOptions& options) {
  if (policies.size() < 2) fail(ErrorKind::InvalidConfig, "policy comparison needs at least two policies");
  PolicyComparison out;
  for (const auto& p : policies) {
    out.reports.push_back(replay(events, p.policy, config, options, p.planner.get(), p.name));
  }
  const std::size_t n = out.reports.size();
  out.delta_pct = Matrix<double>(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.delta_pct(i, j) = uplift_pct(out.reports[i].throughput, out.reports[j].throughput);
    }
  }
  out.ranking.resize(n);
  std::iota(out.ranking.begin(), out.ranking.end(), 0);
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return out.delta_pct(a, 0) > out.delta_pct(b, 0); });
  return out;
}

void write_trace(std::ostream& out, const SimulationReport& report) {
  out << "order_id,day,option,decision,reason,hindsight\n";
  for (const auto& r : report.trace) {
    out << fmt::format("{},{},{},{},{},{}\n", r.order_id, r.day, r.ship_option, to_string(r.decision),
                       to_string(r.reason), r.hindsight_space_available ? 1 : 0);
  }
}

void write_summary_header(std::ostream& out) {
  out << "locker_id,policy,total_requests,accepted,rejected,throughput,overflowed,beyond_window,"
         "missing_delivery,unjustified_rejections,max_occupancy\n";
}

void write_summary_row(std::ostream& out, const SimulationReport& r) {
  out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.locker_id, r.policy, r.total_requests, r.accepted,
                     r.rejected, r.throughput, r.overflowed, r.beyond_window, r.missing_delivery,
                     r.unjustified_rejections, r.max_occupancy);
}

}  // namespace locker
