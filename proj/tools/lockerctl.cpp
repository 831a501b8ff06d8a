#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "locker/event_io.hpp"
#include "locker/pipeline.hpp"

using namespace locker;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kSolver = 4, kReplay = 5, kTraining = 6 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::Io:
      return kConfig;
    case ErrorKind::InvalidEvent:
    case ErrorKind::Ordering:
    case ErrorKind::Data:
      return kData;
    case ErrorKind::Solver: return kSolver;
    case ErrorKind::Replay: return kReplay;
    case ErrorKind::Training: return kTraining;
  }
  return kOther;
}

struct Flags {
  std::string config;
  std::string events, home, lockers, models, out;
  std::vector<std::string> locker_ids;
  std::vector<std::string> policies;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon, workers, run_date, window_first, window_last;
  std::optional<double> margin;
  std::string cadence, limit_mode;
  bool serial = false;
};

void add_pipeline_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "pipeline JSON; the flags below override its keys");
  cmd->add_option("--events", f.events, "event file or directory of event files");
  cmd->add_option("--home", f.home, "home-delivery counts file");
  cmd->add_option("--lockers", f.lockers, "lockers JSON");
  cmd->add_option("--models", f.models, "model directory");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--locker", f.locker_ids, "restrict to these lockers");
  cmd->add_option("--policy", f.policies, "fcfs, proportion, reservation (repeatable)");
  cmd->add_option("--seed", f.seed, "base seed for forecast and dwell training");
  cmd->add_option("--horizon", f.horizon, "planning horizon in days");
  cmd->add_option("--workers", f.workers, "worker threads (0 = all)");
  cmd->add_option("--run-date", f.run_date, "planning day");
  cmd->add_option("--window-first", f.window_first, "first replayed day");
  cmd->add_option("--window-last", f.window_last, "last replayed day");
  cmd->add_option("--margin", f.margin, "safety margin in slots, within [0,1]");
  cmd->add_option("--cadence", f.cadence, "daily or weekly re-solve");
  cmd->add_option("--limit-mode", f.limit_mode, "nested or strict booking limits");
  cmd->add_flag("--serial", f.serial, "run the serial reference path");
}

PipelineConfig make_config(const Flags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::load(f.config);
  if (!f.events.empty()) c.events = f.events;
  if (!f.home.empty()) c.home_deliveries = f.home;
  if (!f.lockers.empty()) c.lockers = f.lockers;
  if (!f.models.empty()) c.models_dir = f.models;
  if (!f.out.empty()) c.output_dir = f.out;
  if (!f.locker_ids.empty()) c.locker_ids = f.locker_ids;
  if (!f.policies.empty()) {
    c.policies.clear();
    for (const auto& p : f.policies) c.policies.push_back(parse_policy_kind(p));
  }
  if (f.seed) {
    c.forecast_seed = derive_seed(*f.seed, 1);
    c.dwell_seed = derive_seed(*f.seed, 2);
    c.workload_seed = *f.seed;
  }
  if (f.horizon) c.horizon = *f.horizon;
  if (f.workers) c.workers = *f.workers;
  if (f.run_date) c.run_date = *f.run_date;
  if (f.window_first) c.window_first = *f.window_first;
  if (f.window_last) c.window_last = *f.window_last;
  if (f.margin) c.safety_margin = *f.margin;
  if (!f.cadence.empty()) c.cadence = parse_cadence(f.cadence);
  if (!f.limit_mode.empty()) c.limit_mode = parse_limit_mode(f.limit_mode);
  c.validate();
  return c;
}

Execution exec_of(const Flags& f) { return f.serial ? Execution::Serial : Execution::Parallel; }

// Prints per-locker failures; returns the exit code of the first one.
int report_failures(const PipelineResult& result) {
  int code = kOk;
  for (const auto& l : result.lockers) {
    if (l.error.empty()) continue;
    fmt::print(stderr, "locker {}: {}\n", l.locker_id, l.error);
    if (code == kOk) code = l.error_kind ? exit_code(*l.error_kind) : kOther;
  }
  return code;
}

std::vector<LockerModels> models_for(const PipelineInputs& inputs, const PipelineConfig& config, const Flags& f,
                                     bool reuse) {
  if (reuse && fs::exists(config.models_dir / "demand")) {
    fmt::print("loading models from {}\n", config.models_dir.string());
    return load_models(config.models_dir, inputs, config);
  }
  return train_models(inputs, config, exec_of(f));
}

int cmd_ingest(const std::vector<std::string>& files, const std::string& output, bool skip_bad) {
  std::vector<fs::path> paths;
  for (const auto& f : files) {
    if (fs::is_directory(f)) {
      std::vector<fs::path> in_dir;
      for (const auto& e : fs::directory_iterator(f)) {
        if (e.path().extension() == ".csv") in_dir.push_back(e.path());
      }
      std::sort(in_dir.begin(), in_dir.end());
      paths.insert(paths.end(), in_dir.begin(), in_dir.end());
    } else {
      paths.emplace_back(f);
    }
  }
  const auto result = ingest_events(paths);
  for (const auto& d : result.diagnostics) {
    fmt::print(stderr, "{}:{}: {}{}\n", d.source, d.line, d.order_id.empty() ? "" : fmt::format("order '{}': ", d.order_id),
               d.message);
  }
  if (!result.diagnostics.empty() && !skip_bad) {
    fmt::print(stderr, "{} bad record(s); nothing written (use --skip-bad to drop them)\n", result.records_dropped);
    return kData;
  }
  write_event_file(output, result.events);
  fmt::print("{} records read, {} dropped, {} written to {}\n", result.records_read, result.records_dropped,
             result.events.size(), output);
  return kOk;
}

int cmd_train(const Flags& f) {
  const auto config = make_config(f);
  const auto inputs = load_inputs(config);
  const auto models = train_models(inputs, config, exec_of(f));
  write_models(config.models_dir, inputs, models);
  for (std::size_t i = 0; i < models.size(); ++i) {
    fmt::print("{}: demand {}\n", inputs.lockers[i].config.locker_id,
               models[i].demand.uses_fallback() ? "proportion-rule fallback" : "forests");
  }
  fmt::print("models written to {}\n", config.models_dir.string());
  return kOk;
}

int cmd_plan(const Flags& f, bool reuse) {
  const auto config = make_config(f);
  const auto inputs = load_inputs(config);
  const auto models = models_for(inputs, config, f, reuse);
  const auto result = plan_all(inputs, models, config, exec_of(f));
  write_plan_outputs(config.output_dir, inputs, result);
  for (const auto& l : result.lockers) {
    if (!l.error.empty()) continue;
    fmt::print("{}: objective {:.3f}, forecast nMAPE {:.4f} (proportion rule {:.4f})\n", l.locker_id,
               l.plan.plan.objective, l.plan.forecast_nmape, l.plan.proportion_nmape);
  }
  return report_failures(result);
}

int cmd_simulate(const Flags& f, bool reuse, const std::string& plans_dir) {
  const auto config = make_config(f);
  const auto inputs = load_inputs(config);
  const auto models = models_for(inputs, config, f, reuse);
  PipelineResult result;
  if (plans_dir.empty()) {
    result = simulate_all(inputs, models, config, exec_of(f));
  } else {
    // Fixed plans from disk; lockers without one are skipped.
    result.lockers.resize(inputs.lockers.size());
    for (std::size_t i = 0; i < inputs.lockers.size(); ++i) {
      const auto& l = inputs.lockers[i];
      auto& r = result.lockers[i];
      r.locker_id = l.config.locker_id;
      r.tier = l.tier;
      const auto file = fs::path(plans_dir) / (l.config.locker_id + ".csv");
      if (!fs::exists(file)) {
        fmt::print(stderr, "warning: no plan for locker {} in {}; skipped\n", l.config.locker_id, plans_dir);
        r.error = "no plan";
        r.error_kind = ErrorKind::Data;
        continue;
      }
      try {
        const auto plan = read_plan_file(file, l.config, l.config.horizon_days);
        r = simulate_locker(l, models[i], inputs, config, &plan);
      } catch (const Error& e) {
        r.error = e.what();
        r.error_kind = e.kind();
      }
    }
  }
  write_outputs(config.output_dir, inputs, result, config);
  write_uplift_table(std::cout, uplift_table(result));
  if (!plans_dir.empty()) {
    // Skipped lockers are warnings, not failures.
    int code = kOk;
    for (const auto& l : result.lockers) {
      if (!l.error.empty() && l.error != "no plan") {
        fmt::print(stderr, "locker {}: {}\n", l.locker_id, l.error);
        if (code == kOk) code = l.error_kind ? exit_code(*l.error_kind) : kOther;
      }
    }
    return code;
  }
  return report_failures(result);
}

int cmd_bench(std::uint64_t seed, int lockers, const std::string& dir) {
  const auto suite = make_benchmark_suite(seed, lockers);
  suite.spec.validate();
  write_benchmark(dir, suite);
  fmt::print("benchmark with {} lockers written to {}\n", lockers, dir);
  return kOk;
}

int cmd_report(const std::string& dir) {
  auto in = open_input(fs::path(dir) / "uplift.csv");
  std::string line;
  std::getline(in, line);
  struct Tier {
    int lockers = 0;
    double uplift_fcfs = 0.0;
    double uplift_proportion = 0.0;
  };
  std::map<std::string, Tier> tiers;
  Tier all;
  auto plot = open_output(fs::path(dir) / "plot_uplift.csv");
  plot << "rank,locker_id,tier,uplift_vs_fcfs_pct\n";
  while (std::getline(in, line)) {
    const auto f = split_fields(trim(line));
    if (f.size() != 8) fail(ErrorKind::Data, fmt::format("uplift.csv: malformed line '{}'", line));
    const double uf = std::stod(std::string(f[6]));
    const double up = std::stod(std::string(f[7]));
    for (Tier* t : {&tiers[std::string(f[2])], &all}) {
      ++t->lockers;
      t->uplift_fcfs += uf;
      t->uplift_proportion += up;
    }
    plot << fmt::format("{},{},{},{}\n", f[0], f[1], f[2], f[6]);
  }
  nlohmann::json j;
  auto row = [](const Tier& t) {
    const double n = std::max(t.lockers, 1);
    return nlohmann::json{{"lockers", t.lockers},
                          {"mean_uplift_vs_fcfs_pct", t.uplift_fcfs / n},
                          {"mean_uplift_vs_proportion_pct", t.uplift_proportion / n}};
  };
  fmt::print("{:<10} {:>7} {:>14} {:>20}\n", "tier", "lockers", "uplift/fcfs %", "uplift/proportion %");
  for (const auto& [name, t] : tiers) {
    j["tiers"][name] = row(t);
    fmt::print("{:<10} {:>7} {:>14.2f} {:>20.2f}\n", name, t.lockers, t.uplift_fcfs / std::max(t.lockers, 1),
               t.uplift_proportion / std::max(t.lockers, 1));
  }
  j["all"] = row(all);
  fmt::print("{:<10} {:>7} {:>14.2f} {:>20.2f}\n", "all", all.lockers, all.uplift_fcfs / std::max(all.lockers, 1),
             all.uplift_proportion / std::max(all.lockers, 1));
  auto out = open_output(fs::path(dir) / "report.json");
  out << j.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parcel locker capacity planning and policy replay"};
  app.require_subcommand(1);

  std::vector<std::string> ingest_files;
  std::string ingest_out = "events.csv";
  bool skip_bad = false;
  auto* ingest = app.add_subcommand("ingest", "validate, sort and store raw event files");
  ingest->add_option("files", ingest_files, "event files or directories")->required();
  ingest->add_option("-o,--output", ingest_out, "validated event store");
  ingest->add_flag("--skip-bad", skip_bad, "drop bad records instead of aborting");

  Flags train_flags, plan_flags, sim_flags;
  auto* train = app.add_subcommand("train", "train demand and dwell models");
  add_pipeline_flags(train, train_flags);

  bool plan_reuse = false;
  auto* plan = app.add_subcommand("plan", "forecast, predict dwell and solve the LP per locker");
  add_pipeline_flags(plan, plan_flags);
  plan->add_flag("--use-models", plan_reuse, "load models from the model directory instead of training");

  bool sim_reuse = false;
  std::string plans_dir;
  auto* simulate = app.add_subcommand("simulate", "replay every policy per locker and write comparisons");
  add_pipeline_flags(simulate, sim_flags);
  simulate->add_flag("--use-models", sim_reuse, "load models from the model directory instead of training");
  simulate->add_option("--plans", plans_dir, "replay fixed plans from this directory instead of re-solving daily");

  std::uint64_t bench_seed = 1;
  int bench_lockers = 30;
  std::string bench_dir = "bench_data";
  auto* bench = app.add_subcommand("bench", "write a synthetic benchmark directory");
  bench->add_option("--seed", bench_seed, "workload seed");
  bench->add_option("--lockers", bench_lockers, "number of lockers");
  bench->add_option("-o,--output", bench_dir, "output directory");

  std::string report_dir = "out";
  auto* report = app.add_subcommand("report", "summarize a simulate output directory");
  report->add_option("dir", report_dir, "simulate output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_files, ingest_out, skip_bad);
    if (*train) return cmd_train(train_flags);
    if (*plan) return cmd_plan(plan_flags, plan_reuse);
    if (*simulate) return cmd_simulate(sim_flags, sim_reuse, plans_dir);
    if (*bench) return cmd_bench(bench_seed, bench_lockers, bench_dir);
    if (*report) return cmd_report(report_dir);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kOther;
  }
  return kOther;
}
