// Acceptance run: one [PASS]/[FAIL] line per criterion.
//
//   acceptance [--known-failure N]...
//
// Exit status is 0 when every criterion passes or every failing criterion is
// listed with --known-failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "locker/isotonic.hpp"
#include "locker/pipeline.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace locker;
using testing_support::random_lp;
using testing_support::to_library;

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the first few problems; the criterion fails on any.
struct Check {
  bool ok = true;
  std::vector<std::string> problems;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    if (problems.size() < 5) problems.push_back(what);
  }
  std::string summary() const {
    std::string s;
    for (const auto& p : problems) s += "\n       " + p;
    return s;
  }
};

ReservationPlan solve(const oracle::SmallLp& lp, LpInstance* inst_out = nullptr) {
  const auto in = to_library(lp);
  const auto inst = build_lp(in.forecast, in.presence, in.carryover, in.config);
  if (inst_out != nullptr) *inst_out = inst;
  return solve_lp(inst);
}

Outcome lp_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 2);
  std::uniform_int_distribution<int> cap(1, 5);
  Check c;
  double worst_gap = 0.0;
  double worst_residual = 0.0;
  double solver_seconds = 0.0;
  const auto start = Clock::now();
  for (int i = 0; i < 200; ++i) {
    const auto lp = random_lp(rng, dim(rng), dim(rng), cap(rng), 3.0);
    LpInstance inst;
    const auto t0 = Clock::now();
    const auto plan = solve(lp, &inst);
    solver_seconds += seconds(t0);
    const double grid = oracle::grid_optimum(lp, 0.05);
    worst_gap = std::max(worst_gap, grid - plan.objective);
    worst_residual = std::max(worst_residual, residuals(plan, inst).max());
    c.expect(plan.objective >= grid - 1e-6, fmt::format("instance {}: {} < grid {}", i, plan.objective, grid));
    c.expect(plan.objective <= lp.total_demand() + 1e-12, fmt::format("instance {}: objective above total demand", i));
  }
  const double total = seconds(start);
  c.expect(worst_residual <= 1e-9, fmt::format("residual {}", worst_residual));
  c.expect(total < 5.0, fmt::format("took {:.2f} s", total));
  return {c.ok, fmt::format("200 instances, max(grid - lp) = {:.2e}, max residual = {:.1e}, {:.2f} s ({:.3f} s in solver)",
                            worst_gap, worst_residual, total, solver_seconds) +
                    c.summary()};
}

Outcome lp_structure() {
  std::mt19937_64 rng(202);
  Check c;
  const auto start = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto lp = random_lp(rng, 4, 7, 5 + static_cast<int>(rng() % 40), 12.0);
    const auto plan = solve(lp);
    std::vector<std::vector<double>> y(4, std::vector<double>(7));
    for (int s = 0; s < 4; ++s) {
      for (int t = 0; t < 7; ++t) y[s][t] = plan.y(s, t);
    }
    for (int s = 0; s < 4; ++s) {
      for (int t = 1; t <= 7; ++t) {
        // Per-option occupancy from the test-side presence curves.
        double occ = lp.carry_term(s, t);
        for (int v = 1; v <= t; ++v) occ += lp.presence(s, v, t) * y[s][v - 1];
        worst = std::max(worst, std::abs(plan.x(s, t - 1) - occ));
      }
    }
  }
  c.expect(worst <= 1e-9, fmt::format("identity off by {:.2e}", worst));
  int violations = 0;
  std::uniform_int_distribution<int> cs(0, 3);
  std::uniform_int_distribution<int> ct(0, 6);
  for (int i = 0; i < 100; ++i) {
    const auto lp = random_lp(rng, 4, 7, 10 + static_cast<int>(rng() % 20), 10.0);
    const double base = solve(lp).objective;
    auto room = lp;
    room.capacity += 1 + static_cast<int>(rng() % 5);
    auto demand = lp;
    demand.demand[cs(rng)][ct(rng)] += 3.0;
    if (solve(room).objective < base - 1e-9 || solve(demand).objective < base - 1e-9) ++violations;
  }
  c.expect(violations == 0, fmt::format("{} monotonicity violations", violations));
  const double total = seconds(start);
  c.expect(total < 10.0, fmt::format("took {:.2f} s", total));
  return {c.ok, fmt::format("1000 instances, max |x - occupancy| = {:.1e}; 100 paired monotonicity checks, {} violations; {:.2f} s",
                            worst, violations, total) +
                    c.summary()};
}

Outcome prioritization() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  int binding = 0;
  for (int i = 0; i < 50; ++i) {
    oracle::SmallLp lp;
    lp.options = 2;
    lp.horizon = 1 + i % 7;
    lp.capacity = 2 + static_cast<int>(u(rng) * 20);
    const auto fast = oracle::random_pmf(rng);
    // Slow: move a random part of each class to a longer dwell.
    std::array<double, 7> slow{};
    for (int k = 0; k < 7; ++k) {
      const double moved = k < 6 ? fast[k] * (0.2 + 0.8 * u(rng)) : 0.0;
      slow[k] += fast[k] - moved;
      slow[std::min(6, k + 1 + static_cast<int>(u(rng) * 3))] += moved;
    }
    lp.pmf = {fast, slow};
    lp.carry.assign(2, std::array<int, 7>{});
    const double d = lp.capacity * (1.0 + 2.0 * u(rng));
    lp.demand.assign(2, std::vector<double>(lp.horizon, d));
    const auto plan = solve(lp);
    double fast_total = 0.0;
    double slow_total = 0.0;
    for (int t = 0; t < lp.horizon; ++t) {
      fast_total += plan.y(0, t);
      slow_total += plan.y(1, t);
      if (plan.y(0, t) < plan.y(1, t) - 1e-9) ++violations;
    }
    if (fast_total < slow_total - 1e-9) ++violations;
    if (plan.objective < lp.total_demand() - 1e-9) ++binding;
  }
  return {violations == 0 && binding == 50,
          fmt::format("50 instances ({} with binding capacity), {} violations of y_fast >= y_slow", binding, violations)};
}

Outcome isotonic() {
  Check c;
  const auto hand = isotonic_fit(std::vector<double>{0.7, 0.2, 0.5});
  c.expect(std::abs(hand[0] - 0.45) < 1e-12 && std::abs(hand[1] - 0.45) < 1e-12 && std::abs(hand[2] - 0.5) < 1e-12,
           "hand case");
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> length(1, 20);
  std::uniform_int_distribution<int> level(0, 6);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> y(length(rng));
    for (double& v : y) v = level(rng) / 6.0;
    const auto f = isotonic_fit(y);
    const auto ref = oracle::isotonic_maxmin(y);
    for (std::size_t k = 0; k < y.size(); ++k) worst = std::max(worst, std::abs(f[k] - ref[k]));
  }
  c.expect(worst <= 1e-8, fmt::format("max deviation {:.2e}", worst));
  return {c.ok, fmt::format("hand case (0.7, 0.2, 0.5) -> ({:.6g}, {:.6g}, {:.6g}); 1000 sequences, max deviation {:.1e}", hand[0],
                            hand[1], hand[2], worst) +
                    c.summary()};
}

struct Bench {
  BenchmarkSuite suite;
  PipelineInputs inputs;
  PipelineConfig config;
  std::vector<LockerModels> models;
  PipelineResult result;
  double pipeline_seconds = 0.0;
};

Outcome hygiene(const Bench& b) {
  Check c;
  long pmfs = 0;
  long cells = 0;
  for (std::size_t i = 0; i < b.inputs.lockers.size(); ++i) {
    const auto& m = b.models[i];
    const int T = b.inputs.lockers[i].config.horizon_days;
    for (int run = 0; run <= 14; ++run) {
      const auto q = m.dwell->pmfs(m.dwell_history, b.inputs.calendar, run, T);
      for (const auto& p : q.values()) {
        double sum = 0.0;
        for (double v : p.probs) {
          sum += v;
          c.expect(v >= 0.0, "negative probability");
        }
        c.expect(std::abs(sum - 1.0) <= 1e-9, fmt::format("pmf sums to {:.17g}", sum));
        ++pmfs;
      }
      const auto presence = pmf_to_presence(q, T);
      for (int s = 0; s < presence.option_count(); ++s) {
        for (int v = -kMaxDwell; v <= T; ++v) {
          if (v >= 1) c.expect(presence.at(s, v, v) == 1.0, "p_s,v,v != 1");
          double prev = 1.0;
          for (int t = std::max(1, v); t <= T; ++t) {
            const double p = presence.at(s, v, t);
            c.expect(p <= prev + 1e-15 && p >= 0.0 && p <= 1.0, "presence not a decaying probability");
            if (t - v > kMaxDwell) c.expect(p == 0.0, "presence beyond lag 6");
            prev = p;
            ++cells;
          }
        }
      }
    }
  }
  return {c.ok, fmt::format("{} pmfs and {} presence cells over run dates 0..14", pmfs, cells) + c.summary()};
}

Outcome forecast_checks(const Bench& b) {
  Check c;
  // Retrain from scratch, serial and parallel, and compare the written files.
  const auto again = train_models(b.inputs, b.config, Execution::Serial);
  testing_support::TempDir x("accept-models-a");
  testing_support::TempDir y("accept-models-b");
  write_models(x.path(), b.inputs, b.models);
  write_models(y.path(), b.inputs, again);
  const auto sx = testing_support::snapshot(x.path());
  c.expect(sx == testing_support::snapshot(y.path()), "retrained artifacts differ");

  long predictions = 0;
  double forest = 0.0;
  double proportion = 0.0;
  int evaluated = 0;
  for (std::size_t i = 0; i < b.inputs.lockers.size(); ++i) {
    const auto& l = b.inputs.lockers[i];
    const auto& m = b.models[i];
    const auto [lo, hi] = m.demand.target_range();
    const int T = l.config.horizon_days;
    for (int run : {0, 7, 13}) {
      const auto f = m.demand.forecast(m.deliveries, b.inputs.home, b.inputs.calendar, l.config, run);
      for (double d : f.values.values()) {
        c.expect(d >= std::max(0.0, lo) - 1e-12 && d <= hi + 1e-12,
                 fmt::format("{} prediction {} outside [{}, {}]", l.config.locker_id, d, lo, hi));
        ++predictions;
      }
      // Deliveries past the planning day are the uncensored demand.
      Matrix<double> actual(l.config.option_count(), T, 0.0);
      for (int s = 0; s < l.config.option_count(); ++s) {
        for (int t = 1; t <= T; ++t) actual(s, t - 1) = m.deliveries.deliveries(s, run + t);
      }
      forest += forecast_nmape(f, actual, l.config.capacity);
      proportion += forecast_nmape(proportion_demand_forecast(b.inputs.home, b.inputs.calendar, l.config, run), actual,
                                   l.config.capacity);
      ++evaluated;
    }
  }
  forest /= std::max(evaluated, 1);
  proportion /= std::max(evaluated, 1);
  c.expect(evaluated > 0 && forest < proportion, "forest does not beat the proportion rule");
  return {c.ok, fmt::format("{} artifact files identical on retrain; {} predictions in range; nMAPE forest {:.2f}% vs "
                            "proportion rule {:.2f}% over {} forecasts",
                            sx.size(), predictions, 100.0 * forest, 100.0 * proportion, evaluated) +
                    c.summary()};
}

Outcome replay_checks(const Bench& b) {
  Check c;
  int reports = 0;
  int requests = 0;
  for (std::size_t i = 0; i < b.result.lockers.size(); ++i) {
    const auto& lr = b.result.lockers[i];
    const auto& l = b.inputs.lockers[i];
    c.expect(lr.error.empty(), lr.locker_id + ": " + lr.error);
    ReplayOptions opt;
    opt.first_day = b.config.window_first;
    opt.last_day = b.config.window_last;
    opt.guard_pmfs = b.models[i].guard_pmfs;
    for (const auto& r : lr.comparison.reports) {
      ++reports;
      requests += r.total_requests;
      c.expect(r.max_occupancy <= l.config.capacity, lr.locker_id + " occupancy above capacity");
      c.expect(r.accepted + r.rejected == r.total_requests, lr.locker_id + " accepted + rejected != requests");
      c.expect(r.accepted == r.throughput + r.overflowed + r.beyond_window + r.missing_delivery,
               lr.locker_id + " accepted packages not all accounted for");
    }
    // Replaying the FCFS decisions as a log: every decision reproduces.
    const auto* fcfs = lr.report("fcfs");
    if (fcfs == nullptr) continue;
    std::set<std::string> rejected;
    for (const auto& d : fcfs->trace) {
      if (d.decision == Decision::Reject) rejected.insert(d.order_id);
    }
    std::vector<PackageEvent> log;
    for (const auto& e : l.events) {
      if (e.kind == EventKind::Request || rejected.count(e.order_id) == 0) log.push_back(e);
    }
    const auto from_log = decisions_from_log(log, l.config, opt.first_day, opt.last_day);
    c.expect(agreement(fcfs->trace, from_log) == 1.0, lr.locker_id + " log agreement below 100%");
    const auto again = replay(l.events, AdmissionPolicy::fcfs(), l.config, opt, nullptr, "fcfs");
    c.expect(agreement(again.trace, fcfs->trace) == 1.0 && again == *fcfs, lr.locker_id + " fcfs replay differs");
    const auto* res = lr.report("reservation");
    if (res != nullptr) {
      const auto redo = simulate_locker(l, b.models[i], b.inputs, b.config);
      c.expect(*redo.report("reservation") == *res, lr.locker_id + " reservation replay differs");
    }
  }
  return {c.ok, fmt::format("{} replays, {} requests; occupancy <= C, self-agreement 100%, accounting exact", reports,
                            requests) +
                    c.summary()};
}

Outcome uplift(const Bench& b) {
  Check c;
  std::map<std::string, std::vector<double>> by_tier;
  double sum = 0.0;
  int n = 0;
  for (const auto& lr : b.result.lockers) {
    const auto* f = lr.report("fcfs");
    const auto* p = lr.report("proportion");
    const auto* r = lr.report("reservation");
    if (f == nullptr || p == nullptr || r == nullptr) {
      c.expect(false, lr.locker_id + " missing a policy report");
      continue;
    }
    const auto line = fmt::format("{} ({}): reservation {} fcfs {} proportion {}", lr.locker_id, lr.tier, r->throughput,
                                  f->throughput, p->throughput);
    c.expect(r->throughput >= f->throughput && r->throughput >= p->throughput, line);
    if (lr.tier == "high") c.expect(r->throughput > f->throughput && r->throughput > p->throughput, line + " not strictly greater");
    if (lr.tier == "low") c.expect(r->throughput == f->throughput && r->throughput == p->throughput, line + " not equal");
    const double u = uplift_pct(r->throughput, f->throughput);
    by_tier[lr.tier].push_back(u);
    sum += u;
    ++n;
  }
  const double mean = n > 0 ? sum / n : 0.0;
  c.expect(mean > 0.0, "mean uplift not positive");
  std::string tiers;
  for (const auto& [tier, v] : by_tier) {
    double s = 0.0;
    for (double x : v) s += x;
    tiers += fmt::format(", {} {:+.2f}%", tier, s / static_cast<double>(v.size()));
  }
  return {c.ok, fmt::format("mean uplift over FCFS {:+.2f}%{}", mean, tiers) + c.summary()};
}

Outcome performance(const Bench& b) {
  Check c;
  double worst = 0.0;
  std::string worst_id;
  for (const auto& lr : b.result.lockers) {
    for (const auto& r : lr.comparison.reports) {
      if (r.runtime_seconds > worst) {
        worst = r.runtime_seconds;
        worst_id = lr.locker_id + "/" + r.policy;
      }
    }
  }
  c.expect(b.pipeline_seconds < 60.0, fmt::format("pipeline took {:.1f} s", b.pipeline_seconds));
  c.expect(worst < 1.0, fmt::format("replay {} took {:.3f} s", worst_id, worst));
  return {c.ok, fmt::format("pipeline {:.1f} s (train {:.1f} s, plan + simulate {:.1f} s); slowest replay {:.3f} s ({})",
                            b.pipeline_seconds, b.result.seconds_train, b.result.seconds_simulate, worst, worst_id) +
                    c.summary()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> known;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--known-failure") == 0 && i + 1 < argc) {
      known.insert(std::atoi(argv[++i]));
    } else {
      fmt::print(stderr, "usage: {} [--known-failure N]...\n", argv[0]);
      return 2;
    }
  }

  int unexpected = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const bool expected = known.count(id) > 0;
    fmt::print("[{}] {}. {}: {}{}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail,
               !o.pass && expected ? "\n       (listed as a known failure)" : "");
    std::fflush(stdout);
    if (!o.pass && !expected) ++unexpected;
  };

  report(1, "LP oracle equivalence", lp_oracle);
  report(2, "LP structure", lp_structure);
  report(3, "Emergent prioritization", prioritization);
  report(4, "Isotonic oracle", isotonic);

  Bench b;
  try {
    b.suite = make_benchmark_suite(1, 30);
    b.inputs = inputs_from_suite(b.suite);
    b.config.run_date = b.suite.history_end;
    b.config.window_first = b.suite.window_first;
    b.config.window_last = b.suite.window_last;
    const auto start = Clock::now();
    b.models = train_models(b.inputs, b.config);
    b.result = simulate_all(b.inputs, b.models, b.config);
    b.pipeline_seconds = seconds(start);
    b.result.seconds_train = b.pipeline_seconds - b.result.seconds_simulate;
  } catch (const std::exception& e) {
    fmt::print("benchmark pipeline failed: {}\n", e.what());
    return 1;
  }

  report(5, "Probability hygiene", [&] { return hygiene(b); });
  report(6, "Forecast determinism and bounds", [&] { return forecast_checks(b); });
  report(7, "Replay correctness", [&] { return replay_checks(b); });
  report(8, "End-to-end uplift", [&] { return uplift(b); });
  report(9, "Performance budget", [&] { return performance(b); });
  return unexpected == 0 ? 0 : 1;
}
