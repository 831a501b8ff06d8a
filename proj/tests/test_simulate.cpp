#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "locker/optimize.hpp"
#include "locker/simulate.hpp"
#include "locker/workload.hpp"
#include "support/builders.hpp"

using namespace locker;
using testing_support::add_order;
using testing_support::make_config;

namespace {

// Option 1 is expedited (fastest), option 2 standard.
ReplayOptions exact_guard(std::vector<int> dwell) {
  ReplayOptions o;
  for (int d : dwell) o.guard_pmfs.push_back(DwellPmf::point(d));
  return o;
}

AdmissionPolicy limits(std::map<int, std::vector<int>> by_day, LimitMode mode = LimitMode::Strict) {
  AdmissionPolicy p;
  p.kind = PolicyKind::Reservation;
  p.limits_by_day = std::move(by_day);
  p.mode = mode;
  return p;
}

std::string fmt_index(const std::string& prefix, int i) { return prefix + "-" + std::to_string(i); }

const DecisionRecord& find(const SimulationReport& r, const std::string& id) {
  const auto it = std::find_if(r.trace.begin(), r.trace.end(), [&](const DecisionRecord& d) { return d.order_id == id; });
  if (it == r.trace.end()) throw std::runtime_error("no decision for " + id);
  return *it;
}

// Standard packages booked early with a long stay, then one expedited
// request for the same delivery day.
std::vector<PackageEvent> crowded_day(int standard_orders) {
  std::vector<PackageEvent> ev;
  for (int i = 0; i < standard_orders; ++i) add_order(ev, "L1", "s" + std::to_string(i), 2, 0, 3, 5);
  add_order(ev, "L1", "e", 1, 2, 3, 3);
  sort_events(ev);
  return ev;
}

LockerWorkload workload_locker(int capacity, std::array<double, 2> rate, std::array<int, 2> dwell,
                               std::array<std::vector<double>, 2> lead) {
  LockerWorkload l;
  l.locker_id = "L1";
  l.zip = "98101";
  l.capacity = capacity;
  const auto opts = standard_ship_options();
  for (int s = 0; s < 2; ++s) {
    auto opt = opts[s];
    opt.id = s + 1;
    opt.speed_rank = s;
    l.options.push_back({opt, rate[s], 1.0, lead[s], DwellPmf::point(dwell[s])});
  }
  return l;
}

std::vector<PackageEvent> generate(const LockerWorkload& l, int first, int last, std::uint64_t seed) {
  SyntheticWorkloadSpec spec;
  spec.lockers = {l};
  spec.first_day = first;
  spec.last_day = last;
  spec.seed = seed;
  return generate_workload(spec);
}

void expect_accounting(const SimulationReport& r, int capacity) {
  EXPECT_EQ(r.accepted + r.rejected, r.total_requests);
  EXPECT_EQ(r.accepted, r.throughput + r.overflowed + r.beyond_window + r.missing_delivery);
  EXPECT_EQ(static_cast<int>(r.trace.size()), r.total_requests);
  EXPECT_LE(r.max_occupancy, capacity);
  for (const auto& d : r.daily) EXPECT_LE(d.total, capacity);
}

}  // namespace

TEST(Replay, EmptyStreamGivesZeroReport) {
  const auto r = replay({}, AdmissionPolicy::fcfs(), make_config(2, 4));
  EXPECT_EQ(r.total_requests, 0);
  EXPECT_EQ(r.accepted, 0);
  EXPECT_EQ(r.throughput, 0);
  EXPECT_EQ(r.max_occupancy, 0);
  EXPECT_TRUE(r.trace.empty());
}

TEST(Replay, CapacityOneRejectsOverlappingSecondPackage) {
  std::vector<PackageEvent> ev;
  add_order(ev, "L1", "a", 1, 1, 1, 2, 1000);
  add_order(ev, "L1", "b", 1, 1, 1, 1, 2000);
  sort_events(ev);
  const auto r = replay(ev, AdmissionPolicy::fcfs(), make_config(1, 1));
  EXPECT_EQ(find(r, "a").decision, Decision::Accept);
  EXPECT_EQ(find(r, "b").reason, Reason::CapacityFull);
  EXPECT_EQ(r.throughput, 1);
}

TEST(Replay, MalformedStreamNamesTheRecord) {
  std::vector<PackageEvent> ev;
  add_order(ev, "L1", "a", 1, 1, 1, 2);
  ev.push_back({"L1", "ghost", EventKind::Delivery, 1, 3, 30000});
  try {
    replay(ev, AdmissionPolicy::fcfs(), make_config(1, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Replay);
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST(CrowdedDay, RoomForEveryoneUnderFcfs) {
  const auto r = replay(crowded_day(3), AdmissionPolicy::fcfs(), make_config(2, 4), exact_guard({0, 2}));
  EXPECT_EQ(r.accepted, 4);
  EXPECT_EQ(find(r, "e").decision, Decision::Accept);
}

TEST(CrowdedDay, StandardOrdersCrowdOutExpedited) {
  const auto r = replay(crowded_day(4), AdmissionPolicy::fcfs(), make_config(2, 4), exact_guard({0, 2}));
  EXPECT_EQ(find(r, "e").reason, Reason::CapacityFull);
  EXPECT_EQ(r.accepted, 4);
}

TEST(CrowdedDay, ReservationFitsBothSpeeds) {
  // Three standard and one expedited on day 3, one more standard on day 6
  // once the first batch has left.
  auto ev = crowded_day(3);
  add_order(ev, "L1", "s-late", 2, 1, 6, 8);
  sort_events(ev);
  const auto policy = limits({{3, {1, 3}}, {6, {0, 1}}});
  const auto r = replay(ev, policy, make_config(2, 4), exact_guard({0, 2}));
  EXPECT_EQ(r.accepted, 5);
  EXPECT_EQ(r.throughput, 5);

  // Same limits against the crowded log: the fourth standard order is held back.
  const auto crowded = replay(crowded_day(4), policy, make_config(2, 4), exact_guard({0, 2}));
  EXPECT_EQ(find(crowded, "s3").reason, Reason::LimitExhausted);
  EXPECT_EQ(find(crowded, "e").decision, Decision::Accept);
}

TEST(ReservationDecide, ZeroLimitRejectsInAnEmptyLocker) {
  std::vector<PackageEvent> ev;
  add_order(ev, "L1", "a", 2, 0, 1, 1);
  sort_events(ev);
  const auto r = replay(ev, limits({{1, {5, 0}}}), make_config(2, 10));
  EXPECT_EQ(find(r, "a").reason, Reason::LimitExhausted);
}

TEST(ReservationDecide, NestedModeLendsUnusedSpaceOnSlackDays) {
  std::vector<PackageEvent> ev;
  add_order(ev, "L1", "a", 2, 0, 1, 1);
  sort_events(ev);
  auto policy = limits({{1, {5, 0}}}, LimitMode::Nested);
  EXPECT_EQ(find(replay(ev, policy, make_config(2, 10)), "a").decision, Decision::Accept);
  // A binding day keeps the faster option's reservation.
  policy.binding_days = {1};
  policy.speed_rank = {0, 1};
  EXPECT_EQ(find(replay(ev, policy, make_config(2, 5), exact_guard({0, 0})), "a").reason, Reason::LimitExhausted);
}

TEST(ReservationDecide, ZeroDemandPlanRejectsEverything) {
  const auto in = testing_support::to_library([] {
    oracle::SmallLp lp;
    lp.options = 2;
    lp.horizon = 3;
    lp.capacity = 6;
    lp.demand.assign(2, std::vector<double>(3, 0.0));
    lp.pmf.assign(2, std::array<double, 7>{1, 0, 0, 0, 0, 0, 0});
    lp.carry.assign(2, std::array<int, 7>{});
    return lp;
  }());
  const auto plan = solve_lp(build_lp(in.forecast, in.presence, in.carryover, in.config));
  std::vector<PackageEvent> ev;
  for (int d = 1; d <= 3; ++d) {
    add_order(ev, "L1", "x" + std::to_string(d), 1, d, d, d);
    add_order(ev, "L1", "y" + std::to_string(d), 2, d - 1, d, d + 1);
  }
  sort_events(ev);
  const auto r = replay(ev, AdmissionPolicy::reservation(plan, LimitMode::Strict), in.config);
  EXPECT_EQ(r.total_requests, 6);
  for (const auto& d : r.trace) EXPECT_EQ(d.reason, Reason::LimitExhausted);
}

TEST(ReservationDecide, RequestsPastThePlanFallBackToFcfs) {
  std::vector<PackageEvent> ev;
  add_order(ev, "L1", "far", 1, 0, 9, 9);
  sort_events(ev);
  const auto r = replay(ev, limits({{1, {0, 0}}}), make_config(2, 4));
  EXPECT_EQ(find(r, "far").decision, Decision::Accept);
  EXPECT_TRUE(find(r, "far").outside_plan);
}

TEST(ProportionDecide, ShareExamples) {
  // Two-day is option 1 with 75 slots, standard option 2 with 25.
  const auto cfg = make_config(2, 100);
  std::vector<PackageEvent> ev;
  for (int i = 0; i < 26; ++i) add_order(ev, "L1", fmt_index("std", i), 2, 0, 1, 1, 100 + i);
  add_order(ev, "L1", "two-day", 1, 0, 1, 1, 500);
  sort_events(ev);
  const auto r = replay(ev, AdmissionPolicy::proportion({75, 25}), cfg, exact_guard({0, 0}));
  EXPECT_EQ(find(r, fmt_index("std", 24)).decision, Decision::Accept);
  EXPECT_EQ(find(r, fmt_index("std", 25)).reason, Reason::LimitExhausted);
  EXPECT_EQ(find(r, "two-day").decision, Decision::Accept);

  const auto zero = replay(ev, AdmissionPolicy::proportion({75, 0}), cfg, exact_guard({0, 0}));
  EXPECT_EQ(find(zero, fmt_index("std", 0)).reason, Reason::LimitExhausted);
}

TEST(ReplayProperty, DeterministicSelfAgreeingAndBalanced) {
  const auto l = workload_locker(12, {4.0, 3.0}, {1, 4}, {std::vector<double>{0.6, 0.4}, {0.1, 0.3, 0.6}});
  const auto cfg = l.config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto ev = generate(l, 1, 20, seed);
    ReplayOptions opt;
    opt.first_day = 1;
    opt.last_day = 20;
    for (const auto& policy : {AdmissionPolicy::fcfs(), AdmissionPolicy::proportion({6, 6})}) {
      const auto a = replay(ev, policy, cfg, opt);
      const auto b = replay(ev, policy, cfg, opt);
      EXPECT_EQ(a, b);
      std::ostringstream ta;
      std::ostringstream tb;
      write_trace(ta, a);
      write_trace(tb, b);
      EXPECT_EQ(ta.str(), tb.str());
      EXPECT_EQ(agreement(b.trace, a.trace), 1.0);
      expect_accounting(a, cfg.capacity);
    }
  }
}

TEST(ReplayProperty, LogWrittenByAPolicyAgreesWithItsTrace) {
  const auto l = workload_locker(8, {4.0, 3.0}, {0, 3}, {std::vector<double>{1.0}, {0.0, 0.5, 0.5}});
  const auto cfg = l.config();
  const auto ev = generate(l, 1, 15, 3);
  ReplayOptions opt;
  opt.first_day = -5;
  opt.last_day = 15;
  opt.guard_pmfs = {DwellPmf::point(0), DwellPmf::point(3)};
  const auto report = replay(ev, AdmissionPolicy::fcfs(), cfg, opt);
  // Drop every downstream event of a rejected order, as the live system would.
  std::set<std::string> rejected;
  for (const auto& d : report.trace) {
    if (d.decision == Decision::Reject) rejected.insert(d.order_id);
  }
  ASSERT_FALSE(rejected.empty());
  std::vector<PackageEvent> log;
  for (const auto& e : ev) {
    if (e.kind == EventKind::Request || rejected.count(e.order_id) == 0) log.push_back(e);
  }
  EXPECT_EQ(agreement(decisions_from_log(log, cfg, opt.first_day, opt.last_day), report.trace), 1.0);
  EXPECT_EQ(agreement(report.trace, decisions_from_log(log, cfg, opt.first_day, opt.last_day)), 1.0);
}

TEST(ReplayProperty, FcfsHasNoUnjustifiedRejectionsWithKnownDwell) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto l = workload_locker(10, {5.0, 3.0}, {1, 3}, {std::vector<double>{0.5, 0.5}, {0.2, 0.4, 0.4}});
    const auto ev = generate(l, 1, 25, seed);
    ReplayOptions opt = exact_guard({1, 3});
    opt.first_day = -5;
    const auto r = replay(ev, AdmissionPolicy::fcfs(), l.config(), opt);
    EXPECT_GT(r.rejected, 0);
    EXPECT_EQ(r.unjustified_rejections, 0) << "seed " << seed;
  }
}

TEST(ComparePolicies, LowDemandMakesEveryPolicyEqual) {
  const auto l = workload_locker(60, {1.0, 1.0}, {1, 2}, {std::vector<double>{1.0}, {0.0, 1.0}});
  const auto cfg = l.config();
  const auto ev = generate(l, 1, 14, 4);
  std::map<int, std::vector<int>> generous;
  for (int d = -2; d <= 20; ++d) generous[d] = {60, 60};
  const std::vector<PolicySetup> setups{{"fcfs", AdmissionPolicy::fcfs(), nullptr},
                                        {"proportion", AdmissionPolicy::proportion({30, 30}), nullptr},
                                        {"reservation", limits(generous), nullptr}};
  ReplayOptions opt;
  opt.first_day = -2;
  const auto cmp = compare_policies(ev, setups, cfg, opt);
  ASSERT_EQ(cmp.reports.size(), 3u);
  EXPECT_GT(cmp.reports[0].throughput, 0);
  for (const auto& r : cmp.reports) {
    EXPECT_EQ(r.throughput, cmp.reports[0].throughput);
    EXPECT_EQ(r.rejected, 0);
  }
  for (double d : cmp.delta_pct.values()) EXPECT_EQ(d, 0.0);
}

TEST(ComparePolicies, IdenticalPoliciesHaveZeroDelta) {
  const auto l = workload_locker(6, {4.0, 3.0}, {1, 4}, {std::vector<double>{1.0}, {0.0, 0.5, 0.5}});
  const auto ev = generate(l, 1, 10, 2);
  const std::vector<PolicySetup> setups{{"a", AdmissionPolicy::fcfs(), nullptr}, {"b", AdmissionPolicy::fcfs(), nullptr}};
  const auto cmp = compare_policies(ev, setups, l.config());
  EXPECT_EQ(cmp.delta_pct(0, 1), 0.0);
  EXPECT_EQ(cmp.delta_pct(1, 0), 0.0);
  EXPECT_THROW(compare_policies(ev, std::span(setups).first(1), l.config()), Error);
}

// Standard packages are booked days ahead and stay long; expedited ones are
// booked the same day and leave the same day. An LP planned on the true
// demand should do at least as well as first come first served.
TEST(ComparePolicies, ReservationAtLeastMatchesFcfsWhenDwellDiffers) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto l = workload_locker(12, {8.0, 4.0}, {0, 5}, {std::vector<double>{1.0}, {0.0, 0.0, 0.5, 0.5}});
    const auto cfg = l.config();
    const auto ev = generate(l, 1, 7, seed);
    DemandForecast f;
    f.values = Matrix<double>(2, 7, 0.0);
    for (const auto& e : ev) {
      if (e.kind == EventKind::Delivery) f.values(cfg.option_index(e.ship_option), e.day - 1) += 1.0;
    }
    const std::vector<DwellPmf> pmfs{DwellPmf::point(0), DwellPmf::point(5)};
    const auto presence = pmf_to_presence(std::span<const DwellPmf>(pmfs), 7);
    const auto plan = solve_lp(build_lp(f, presence, Carryover(2), cfg));
    ReplayOptions opt = exact_guard({0, 5});
    opt.first_day = -5;
    opt.last_day = 7;
    const auto fcfs = replay(ev, AdmissionPolicy::fcfs(), cfg, opt);
    const auto res = replay(ev, AdmissionPolicy::reservation(plan, LimitMode::Nested, {0, 1}), cfg, opt);
    EXPECT_GE(res.throughput, fcfs.throughput) << "seed " << seed;
    if (res.throughput > fcfs.throughput) ++wins;
    expect_accounting(res, cfg.capacity);
  }
  EXPECT_GT(wins, 0);
}

TEST(AdmissionPolicy, Validation) {
  EXPECT_THROW(replay({}, AdmissionPolicy::proportion({1.0}), make_config(2, 4)), Error);
  EXPECT_THROW(replay({}, limits({{1, {-1, 0}}}), make_config(2, 4)), Error);
  ReplayOptions bad;
  bad.safety_margin = 1.5;
  EXPECT_THROW(replay({}, AdmissionPolicy::fcfs(), make_config(2, 4), bad), Error);
  EXPECT_EQ(uplift_pct(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(uplift_pct(115, 100), 15.0);
}
