#include "locker/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <omp.h>

#include "locker/event_io.hpp"

namespace locker {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ForestParams forest_from_json(const json& j, ForestParams p) {
  p.trees = j.value("trees", p.trees);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.min_leaf = j.value("min_leaf", p.min_leaf);
  p.features_per_split = j.value("features_per_split", p.features_per_split);
  return p;
}

json forest_to_json(const ForestParams& p) {
  return {{"trees", p.trees}, {"max_depth", p.max_depth}, {"min_leaf", p.min_leaf},
          {"features_per_split", p.features_per_split}};
}

struct TaskError {
  std::exception_ptr ptr;
  std::string what;
  std::optional<ErrorKind> kind;
};

// Runs body(i) for i in [0, n), collecting the exception of each index.
template <typename Body>
std::vector<TaskError> fan_out(std::size_t n, Execution exec, int workers, Body body) {
  std::vector<TaskError> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      body(i);
    } catch (const Error& e) {
      errors[i] = {std::current_exception(), e.what(), e.kind()};
    } catch (const std::exception& e) {
      errors[i] = {std::current_exception(), e.what(), std::nullopt};
    }
  };
  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) guarded(static_cast<std::size_t>(i));
  }
  return errors;
}

void rethrow_first(const std::vector<TaskError>& errors) {
  for (const auto& e : errors) {
    if (e.ptr) std::rethrow_exception(e.ptr);
  }
}

std::vector<int> speed_ranks(const LockerConfig& config) {
  std::vector<int> ranks;
  for (const auto& o : config.ship_options) ranks.push_back(o.speed_rank);
  return ranks;
}

}  // namespace

Cadence parse_cadence(std::string_view text) {
  if (text == "daily") return Cadence::Daily;
  if (text == "weekly") return Cadence::Weekly;
  fail(ErrorKind::InvalidConfig, fmt::format("cadence must be daily or weekly (got '{}')", text));
}

LimitMode parse_limit_mode(std::string_view text) {
  if (text == "nested") return LimitMode::Nested;
  if (text == "strict") return LimitMode::Strict;
  fail(ErrorKind::InvalidConfig, fmt::format("limit_mode must be nested or strict (got '{}')", text));
}

void PipelineConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorKind::InvalidConfig, msg); };
  if (horizon < 1 || horizon > 7) bad("horizon must lie in 1..7");
  if (window_first > window_last) bad("simulation window is empty");
  if (safety_margin < 0.0 || safety_margin > 1.0) bad("safety_margin must lie in [0,1]");
  if (policies.empty()) bad("at least one policy is required");
  if (workers < 0) bad("workers must be >= 0");
  forecast_forest.validate();
  forecast_window.validate();
  dwell.validate();
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base, PipelineConfig start) {
  PipelineConfig c = std::move(start);
  auto path = [&](const char* key, std::filesystem::path& field) {
    if (j.contains(key)) field = resolve(base, j[key].get<std::string>());
  };
  try {
    if (!j.is_object()) fail(ErrorKind::InvalidConfig, "pipeline config must be a JSON object");
    path("events", c.events);
    path("home_deliveries", c.home_deliveries);
    path("lockers", c.lockers);
    path("models_dir", c.models_dir);
    path("output_dir", c.output_dir);
    c.locker_ids = j.value("locker_ids", c.locker_ids);
    c.epoch = j.value("epoch", c.epoch);
    c.horizon = j.value("horizon", c.horizon);
    c.run_date = j.value("run_date", c.run_date);
    if (j.contains("window")) {
      c.window_first = j["window"].value("first", c.window_first);
      c.window_last = j["window"].value("last", c.window_last);
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      c.forecast_seed = s.value("forecast", c.forecast_seed);
      c.dwell_seed = s.value("dwell", c.dwell_seed);
      c.workload_seed = s.value("workload", c.workload_seed);
    }
    if (j.contains("policies")) {
      c.policies.clear();
      for (const auto& p : j["policies"]) c.policies.push_back(parse_policy_kind(p.get<std::string>()));
    }
    if (j.contains("forecast_forest")) c.forecast_forest = forest_from_json(j["forecast_forest"], c.forecast_forest);
    if (j.contains("forecast_window")) {
      const auto& w = j["forecast_window"];
      c.forecast_window.weeks = w.value("weeks", c.forecast_window.weeks);
      c.forecast_window.min_weeks = w.value("min_weeks", c.forecast_window.min_weeks);
      c.forecast_window.peak_first_week = w.value("peak_first_week", c.forecast_window.peak_first_week);
      c.forecast_window.peak_last_week = w.value("peak_last_week", c.forecast_window.peak_last_week);
    }
    if (j.contains("dwell")) {
      const auto& d = j["dwell"];
      c.dwell.forest = forest_from_json(d, c.dwell.forest);
      c.dwell.folds = d.value("folds", c.dwell.folds);
      c.dwell.window_days = d.value("window_days", c.dwell.window_days);
      c.dwell.sparse_threshold = d.value("sparse_threshold", c.dwell.sparse_threshold);
      c.dwell.per_option_only = d.value("per_option_only", c.dwell.per_option_only);
    }
    c.safety_margin = j.value("safety_margin", c.safety_margin);
    c.count_rejected_demand = j.value("count_rejected_demand", c.count_rejected_demand);
    if (j.contains("cadence")) c.cadence = parse_cadence(j["cadence"].get<std::string>());
    if (j.contains("limit_mode")) c.limit_mode = parse_limit_mode(j["limit_mode"].get<std::string>());
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, fmt::format("pipeline config: {}", e.what()));
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base) {
  return from_json(j, base, PipelineConfig{});
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) { return load(path, PipelineConfig{}); }

PipelineConfig PipelineConfig::load(const std::filesystem::path& path, PipelineConfig start) {
  auto in = open_input(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j, path.parent_path(), std::move(start));
}

json PipelineConfig::to_json() const {
  json policies_json = json::array();
  for (auto p : policies) policies_json.push_back(std::string(to_string(p)));
  return {
      {"events", events.string()},
      {"home_deliveries", home_deliveries.string()},
      {"lockers", lockers.string()},
      {"models_dir", models_dir.string()},
      {"output_dir", output_dir.string()},
      {"locker_ids", locker_ids},
      {"epoch", epoch},
      {"horizon", horizon},
      {"run_date", run_date},
      {"window", {{"first", window_first}, {"last", window_last}}},
      {"seeds", {{"forecast", forecast_seed}, {"dwell", dwell_seed}, {"workload", workload_seed}}},
      {"policies", policies_json},
      {"forecast_forest", forest_to_json(forecast_forest)},
      {"forecast_window",
       {{"weeks", forecast_window.weeks},
        {"min_weeks", forecast_window.min_weeks},
        {"peak_first_week", forecast_window.peak_first_week},
        {"peak_last_week", forecast_window.peak_last_week}}},
      {"dwell",
       {{"trees", dwell.forest.trees},
        {"max_depth", dwell.forest.max_depth},
        {"min_leaf", dwell.forest.min_leaf},
        {"features_per_split", dwell.forest.features_per_split},
        {"folds", dwell.folds},
        {"window_days", dwell.window_days},
        {"sparse_threshold", dwell.sparse_threshold},
        {"per_option_only", dwell.per_option_only}}},
      {"safety_margin", safety_margin},
      {"count_rejected_demand", count_rejected_demand},
      {"cadence", cadence == Cadence::Daily ? "daily" : "weekly"},
      {"limit_mode", limit_mode == LimitMode::Nested ? "nested" : "strict"},
      {"workers", workers},
  };
}

json locker_to_json(const LockerConfig& c, const std::string& tier) {
  json options = json::array();
  for (const auto& o : c.ship_options) {
    options.push_back({{"id", o.id}, {"label", o.label}, {"speed_rank", o.speed_rank}, {"lead_days", o.lead_days}});
  }
  json j = {{"locker_id", c.locker_id}, {"capacity", c.capacity}, {"zip", c.zip},
            {"horizon_days", c.horizon_days}, {"ship_options", options}};
  if (!tier.empty()) j["tier"] = tier;
  return j;
}

LockerConfig locker_from_json(const json& j) {
  LockerConfig c;
  try {
    c.locker_id = j.at("locker_id").get<std::string>();
    c.capacity = j.at("capacity").get<int>();
    c.zip = j.value("zip", std::string{});
    c.horizon_days = j.value("horizon_days", 7);
    for (const auto& o : j.at("ship_options")) {
      c.ship_options.push_back({o.at("id").get<int>(), o.at("label").get<std::string>(), o.value("speed_rank", 0),
                                o.value("lead_days", 0)});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, fmt::format("locker config: {}", e.what()));
  }
  return c;
}

PipelineInputs load_inputs(const PipelineConfig& config) {
  PipelineInputs inputs;
  inputs.calendar = Calendar::from_string(config.epoch);
  if (config.lockers.empty()) fail(ErrorKind::InvalidConfig, "no lockers file configured");
  auto in = open_input(config.lockers);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, fmt::format("{}: {}", config.lockers.string(), e.what()));
  }
  const std::set<std::string> wanted(config.locker_ids.begin(), config.locker_ids.end());
  std::set<std::string> found;
  for (const auto& entry : j.value("lockers", json::array())) {
    LockerData d;
    d.config = locker_from_json(entry);
    d.config.horizon_days = config.horizon;
    d.config.validate();
    d.tier = entry.value("tier", std::string{});
    if (!wanted.empty() && wanted.count(d.config.locker_id) == 0) continue;
    found.insert(d.config.locker_id);
    inputs.lockers.push_back(std::move(d));
  }
  for (const auto& id : wanted) {
    if (found.count(id) == 0) fail(ErrorKind::InvalidConfig, fmt::format("locker '{}' is not in {}", id, config.lockers.string()));
  }

  std::vector<PackageEvent> events;
  if (!config.events.empty()) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(config.events)) {
      for (const auto& e : std::filesystem::directory_iterator(config.events)) {
        if (e.path().extension() == ".csv") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(config.events);
    }
    for (const auto& f : files) {
      auto part = read_event_file(f);
      events.insert(events.end(), part.begin(), part.end());
    }
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < inputs.lockers.size(); ++i) index[inputs.lockers[i].config.locker_id] = i;
  for (auto& ev : events) {
    const auto it = index.find(ev.locker_id);
    if (it != index.end()) inputs.lockers[it->second].events.push_back(std::move(ev));
  }
  for (auto& l : inputs.lockers) sort_events(l.events);
  if (!config.home_deliveries.empty()) inputs.home = HomeDeliveries::read(config.home_deliveries);
  return inputs;
}

IngestResult ingest_events(std::span<const std::filesystem::path> files) {
  IngestResult out;
  struct Origin {
    std::size_t file;
    std::size_t line;
  };
  std::vector<PackageEvent> events;
  std::vector<Origin> origin;
  for (std::size_t f = 0; f < files.size(); ++f) {
    std::vector<Diagnostic> errors;
    std::vector<std::size_t> lines;
    auto part = read_event_file(files[f], &errors, &lines);
    for (const auto& e : errors) out.diagnostics.push_back({files[f].string(), e.index, {}, e.message});
    out.records_read += part.size() + errors.size();
    out.records_dropped += errors.size();
    for (std::size_t i = 0; i < part.size(); ++i) {
      events.push_back(std::move(part[i]));
      origin.push_back({f, lines[i]});
    }
  }
  // Dropping a record can expose a new violation in its order, so repeat
  // until the stream is clean.
  for (;;) {
    std::vector<Diagnostic> diagnostics;
    collate_orders(events, &diagnostics);
    if (diagnostics.empty()) break;
    std::vector<char> drop(events.size(), 0);
    for (const auto& d : diagnostics) {
      if (drop[d.index]) continue;
      drop[d.index] = 1;
      out.diagnostics.push_back({files[origin[d.index].file].string(), origin[d.index].line, d.order_id, d.message});
    }
    std::vector<PackageEvent> kept;
    std::vector<Origin> kept_origin;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (drop[i]) {
        ++out.records_dropped;
        continue;
      }
      kept.push_back(std::move(events[i]));
      kept_origin.push_back(origin[i]);
    }
    events = std::move(kept);
    origin = std::move(kept_origin);
  }
  std::stable_sort(out.diagnostics.begin(), out.diagnostics.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.line) < std::tie(b.source, b.line);
  });
  sort_events(events);
  out.events = std::move(events);
  return out;
}

PipelineInputs inputs_from_suite(const BenchmarkSuite& suite) {
  PipelineInputs inputs;
  inputs.calendar = suite.spec.calendar;
  const auto events = generate_workload(suite.spec);
  inputs.home = generate_home_deliveries(suite.spec, suite.spec.first_day - 371, suite.spec.last_day);
  for (const auto& l : suite.spec.lockers) {
    LockerData d;
    d.config = l.config();
    d.tier = l.tier;
    std::vector<DwellPmf> truth;
    for (const auto& o : l.options) truth.push_back(o.dwell);
    d.events = censor_history(events, d.config, suite.history_end, truth);
    inputs.lockers.push_back(std::move(d));
  }
  return inputs;
}

namespace {

std::vector<LockerModels> index_histories(const PipelineInputs& inputs, const PipelineConfig& config, Execution exec) {
  std::vector<LockerModels> models(inputs.lockers.size());
  rethrow_first(fan_out(models.size(), exec, config.workers, [&](std::size_t i) {
    const auto& l = inputs.lockers[i];
    auto& m = models[i];
    m.deliveries = DeliveryHistory::from_events(l.events, l.config, config.count_rejected_demand);
    m.dwell_history = DwellHistory::from_events(l.events, l.config);
    const int from = config.run_date - config.dwell.window_days + 1;
    std::vector<std::vector<int>> dwells(l.config.option_count());
    for (const auto& o : m.dwell_history.observations()) {
      if (o.delivery_day >= from && o.terminal_day <= config.run_date) {
        dwells[l.config.option_index(o.ship_option)].push_back(o.dwell);
      }
    }
    for (const auto& d : dwells) m.guard_pmfs.push_back(smoothed_pmf(d));
  }));
  return models;
}

std::string zip_key(const LockerConfig& config) { return config.zip.empty() ? std::string("default") : config.zip; }

}  // namespace

std::vector<LockerModels> train_models(const PipelineInputs& inputs, const PipelineConfig& config, Execution exec) {
  config.validate();
  // Parallelism lives in the fan-out; each model trains serially.
  constexpr Execution inner = Execution::Serial;
  auto models = index_histories(inputs, config, exec);

  std::map<std::string, std::vector<std::size_t>> zips;
  for (std::size_t i = 0; i < models.size(); ++i) zips[zip_key(inputs.lockers[i].config)].push_back(i);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> pools(zips.begin(), zips.end());
  std::vector<std::shared_ptr<const DwellModel>> dwell(pools.size());
  rethrow_first(fan_out(pools.size(), exec, config.workers, [&](std::size_t p) {
    std::vector<DwellHistory> pool;
    for (std::size_t i : pools[p].second) pool.push_back(models[i].dwell_history);
    dwell[p] = std::make_shared<const DwellModel>(DwellModel::train(
        pool, inputs.calendar, config.run_date, config.dwell, derive_seed(config.dwell_seed, fnv1a(pools[p].first)),
        inner));
  }));
  for (std::size_t p = 0; p < pools.size(); ++p) {
    for (std::size_t i : pools[p].second) models[i].dwell = dwell[p];
  }

  rethrow_first(fan_out(models.size(), exec, config.workers, [&](std::size_t i) {
    const auto& l = inputs.lockers[i];
    models[i].demand = DemandModel::train(models[i].deliveries, inputs.home, inputs.calendar, l.config,
                                          config.run_date, config.forecast_forest,
                                          derive_seed(config.forecast_seed, fnv1a(l.config.locker_id)),
                                          config.forecast_window, inner);
  }));
  return models;
}

std::vector<LockerModels> load_models(const std::filesystem::path& dir, const PipelineInputs& inputs,
                                      const PipelineConfig& config) {
  auto models = index_histories(inputs, config, Execution::Serial);
  std::map<std::string, std::shared_ptr<const DwellModel>> dwell;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& cfg = inputs.lockers[i].config;
    auto in = open_input(dir / "demand" / (cfg.locker_id + ".model"));
    models[i].demand = DemandModel::read(in);
    auto& shared = dwell[zip_key(cfg)];
    if (!shared) {
      auto dw = open_input(dir / "dwell" / (zip_key(cfg) + ".model"));
      shared = std::make_shared<const DwellModel>(DwellModel::read(dw));
    }
    models[i].dwell = shared;
  }
  return models;
}

LockerPlan plan_locker(const LockerData& locker, const LockerModels& models, const PipelineInputs& inputs,
                       int run_date) {
  const auto& cfg = locker.config;
  const int T = cfg.horizon_days;
  LockerPlan out;
  out.forecast = models.demand.forecast(models.deliveries, inputs.home, inputs.calendar, cfg, run_date);
  const auto pmfs = models.dwell->pmfs(models.dwell_history, inputs.calendar, run_date, T);
  out.presence = pmf_to_presence(pmfs, T);
  out.carryover = extract_carryover(locker.events, run_date, cfg);
  const auto lp = build_lp(out.forecast, out.presence, out.carryover, cfg);
  out.plan = solve_lp(lp);
  out.plan.locker_id = cfg.locker_id;
  out.plan.run_date = run_date;

  if (!models.deliveries.empty() && models.deliveries.last_day() >= run_date + T) {
    Matrix<double> actual(cfg.option_count(), T, 0.0);
    for (int s = 0; s < cfg.option_count(); ++s) {
      for (int t = 1; t <= T; ++t) actual(s, t - 1) = models.deliveries.deliveries(s, run_date + t);
    }
    out.forecast_nmape = forecast_nmape(out.forecast, actual, cfg.capacity);
    out.proportion_nmape =
        forecast_nmape(proportion_demand_forecast(inputs.home, inputs.calendar, cfg, run_date), actual, cfg.capacity);
    const auto deliveries = delivery_counts(locker.events, cfg, run_date, T);
    const auto actual_pick = actual_pickups(locker.events, cfg, run_date, T);
    out.pickup_error = pickup_error_metric(expected_pickups(pmfs, deliveries, T), actual_pick, cfg.capacity);
    Matrix<DwellPmf> same_day(cfg.option_count(), T + kCarryoverDays, DwellPmf::point(0));
    out.pickup_error_same_day =
        pickup_error_metric(expected_pickups(same_day, deliveries, T), actual_pick, cfg.capacity);
  }
  return out;
}

ReservationPlanner::ReservationPlanner(const LockerData& locker, const LockerModels& models,
                                       const PipelineInputs& inputs, const PipelineConfig& config)
    : locker_(locker), models_(models), inputs_(inputs), config_(config) {}

AdmissionPolicy ReservationPlanner::plan(int run_date, const LockerState& state) {
  if (config_.cadence == Cadence::Weekly && anchor_ && (run_date - *anchor_) % 7 != 0) return cached_;
  const auto& cfg = locker_.config;
  const int T = cfg.horizon_days;
  auto forecast = models_.demand.forecast(models_.deliveries, inputs_.home, inputs_.calendar, cfg, run_date);
  for (int s = 0; s < cfg.option_count(); ++s) {
    for (int t = 1; t <= T; ++t) {
      forecast.values(s, t - 1) = std::max(forecast.values(s, t - 1), static_cast<double>(state.accepted(s, run_date + t)));
    }
  }
  const auto presence = models_.dwell->presence(models_.dwell_history, inputs_.calendar, run_date, T);
  const auto lp = build_lp(forecast, presence, state.carryover(), cfg);
  auto plan = solve_lp(lp);
  plan.locker_id = cfg.locker_id;
  plan.run_date = run_date;
  ++solves_;
  if (!anchor_) anchor_ = run_date;
  cached_ = AdmissionPolicy::reservation(plan, config_.limit_mode, speed_ranks(cfg));
  return cached_;
}

AdmissionPolicy proportion_policy(const LockerConfig& locker, const HomeDeliveries& home, const Calendar& calendar,
                                  int first_day, int last_day) {
  AdmissionPolicy p;
  p.kind = PolicyKind::ProportionRule;
  for (int d = first_day; d <= last_day + kMaxDwell + 7; ++d) {
    const IsoWeek w = calendar.iso_week(d);
    const auto counts = home.week_counts(locker.zip, {w.year - 1, w.week}, locker.option_count());
    p.shares_by_day[d] = proportion_rule_forecast(counts, locker.capacity);
  }
  p.shares = p.shares_by_day.begin()->second;
  return p;
}

const SimulationReport* LockerResult::report(std::string_view policy) const {
  for (const auto& r : comparison.reports) {
    if (r.policy == policy) return &r;
  }
  return nullptr;
}

LockerResult simulate_locker(const LockerData& locker, const LockerModels& models, const PipelineInputs& inputs,
                             const PipelineConfig& config, const ReservationPlan* fixed_plan) {
  LockerResult out;
  out.locker_id = locker.config.locker_id;
  out.tier = locker.tier;
  out.plan = plan_locker(locker, models, inputs, config.run_date);

  std::vector<PolicySetup> setups;
  for (auto kind : config.policies) {
    PolicySetup s;
    s.name = std::string(to_string(kind));
    switch (kind) {
      case PolicyKind::Fcfs:
        s.policy = AdmissionPolicy::fcfs();
        break;
      case PolicyKind::ProportionRule:
        s.policy = proportion_policy(locker.config, inputs.home, inputs.calendar, config.window_first,
                                     config.window_last);
        break;
      case PolicyKind::Reservation:
        if (fixed_plan != nullptr) {
          s.policy = AdmissionPolicy::reservation(*fixed_plan, config.limit_mode, speed_ranks(locker.config));
        } else {
          s.policy = AdmissionPolicy::reservation(out.plan.plan, config.limit_mode, speed_ranks(locker.config));
          s.planner = std::make_shared<ReservationPlanner>(locker, models, inputs, config);
        }
        break;
    }
    setups.push_back(std::move(s));
  }
  ReplayOptions options;
  options.first_day = config.window_first;
  options.last_day = config.window_last;
  options.guard_pmfs = models.guard_pmfs;
  options.safety_margin = config.safety_margin;
  if (setups.size() >= 2) {
    out.comparison = compare_policies(locker.events, setups, locker.config, options);
  } else {
    out.comparison.reports.push_back(
        replay(locker.events, setups[0].policy, locker.config, options, setups[0].planner.get(), setups[0].name));
    out.comparison.delta_pct = Matrix<double>(1, 1, 0.0);
    out.comparison.ranking = {0};
  }
  return out;
}

namespace {

template <typename Body>
PipelineResult per_locker(const PipelineInputs& inputs, const PipelineConfig& config, Execution exec, Body body) {
  PipelineResult result;
  result.lockers.resize(inputs.lockers.size());
  const auto errors = fan_out(inputs.lockers.size(), exec, config.workers,
                              [&](std::size_t i) { result.lockers[i] = body(i); });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].ptr) continue;
    auto& l = result.lockers[i];
    l = LockerResult{};
    l.locker_id = inputs.lockers[i].config.locker_id;
    l.tier = inputs.lockers[i].tier;
    l.error = errors[i].what;
    l.error_kind = errors[i].kind;
  }
  return result;
}

}  // namespace

PipelineResult simulate_all(const PipelineInputs& inputs, const std::vector<LockerModels>& models,
                            const PipelineConfig& config, Execution exec) {
  const auto start = std::chrono::steady_clock::now();
  auto result = per_locker(inputs, config, exec, [&](std::size_t i) {
    return simulate_locker(inputs.lockers[i], models[i], inputs, config);
  });
  result.seconds_simulate = seconds_since(start);
  return result;
}

PipelineResult plan_all(const PipelineInputs& inputs, const std::vector<LockerModels>& models,
                        const PipelineConfig& config, Execution exec) {
  return per_locker(inputs, config, exec, [&](std::size_t i) {
    LockerResult r;
    r.locker_id = inputs.lockers[i].config.locker_id;
    r.tier = inputs.lockers[i].tier;
    r.plan = plan_locker(inputs.lockers[i], models[i], inputs, config.run_date);
    return r;
  });
}

PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineConfig& config, Execution exec) {
  const auto start = std::chrono::steady_clock::now();
  const auto models = train_models(inputs, config, exec);
  const double train = seconds_since(start);
  auto result = simulate_all(inputs, models, config, exec);
  result.seconds_train = train;
  return result;
}

std::vector<UpliftRow> uplift_table(const PipelineResult& result) {
  std::vector<UpliftRow> rows;
  for (const auto& l : result.lockers) {
    if (!l.error.empty()) continue;
    UpliftRow row;
    row.locker_id = l.locker_id;
    row.tier = l.tier;
    for (const auto& r : l.comparison.reports) row.throughput[r.policy] = r.throughput;
    const auto get = [&](const char* name) -> std::optional<int> {
      const auto it = row.throughput.find(name);
      if (it == row.throughput.end()) return std::nullopt;
      return it->second;
    };
    if (const auto res = get("reservation")) {
      if (const auto f = get("fcfs")) row.uplift_vs_fcfs = uplift_pct(*res, *f);
      if (const auto p = get("proportion")) row.uplift_vs_proportion = uplift_pct(*res, *p);
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const UpliftRow& a, const UpliftRow& b) {
    if (a.uplift_vs_fcfs != b.uplift_vs_fcfs) return a.uplift_vs_fcfs > b.uplift_vs_fcfs;
    return a.locker_id < b.locker_id;
  });
  return rows;
}

void write_uplift_table(std::ostream& out, const std::vector<UpliftRow>& rows) {
  out << "rank,locker_id,tier,fcfs,proportion,reservation,uplift_vs_fcfs_pct,uplift_vs_proportion_pct\n";
  auto cell = [](const UpliftRow& r, const char* name) {
    const auto it = r.throughput.find(name);
    return it == r.throughput.end() ? std::string{} : std::to_string(it->second);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << fmt::format("{},{},{},{},{},{},{:.4f},{:.4f}\n", i + 1, r.locker_id, r.tier, cell(r, "fcfs"),
                       cell(r, "proportion"), cell(r, "reservation"), r.uplift_vs_fcfs, r.uplift_vs_proportion);
  }
}

void write_models(const std::filesystem::path& dir, const PipelineInputs& inputs,
                  const std::vector<LockerModels>& models) {
  std::set<std::string> zips_written;
  for (std::size_t i = 0; i < inputs.lockers.size(); ++i) {
    const auto& cfg = inputs.lockers[i].config;
    auto out = open_output(dir / "demand" / (cfg.locker_id + ".model"));
    models[i].demand.write(out);
    if (zips_written.insert(zip_key(cfg)).second) {
      auto dw = open_output(dir / "dwell" / (zip_key(cfg) + ".model"));
      models[i].dwell->write(dw);
    }
  }
}

void write_plan_outputs(const std::filesystem::path& dir, const PipelineInputs& inputs, const PipelineResult& result) {
  auto metrics = open_output(dir / "metrics.csv");
  metrics << "locker_id,tier,objective,forecast_nmape,proportion_nmape,pickup_error,pickup_error_same_day\n";
  auto errors = open_output(dir / "errors.csv");
  errors << "locker_id,kind,message\n";
  for (std::size_t i = 0; i < result.lockers.size(); ++i) {
    const auto& l = result.lockers[i];
    if (!l.error.empty()) {
      errors << fmt::format("{},{},\"{}\"\n", l.locker_id, l.error_kind ? to_string(*l.error_kind) : "other", l.error);
      continue;
    }
    write_plan_file(dir / "plans" / (l.locker_id + ".csv"), l.plan.plan, inputs.lockers[i].config);
    metrics << fmt::format("{},{},{},{},{},{},{}\n", l.locker_id, l.tier, l.plan.plan.objective, l.plan.forecast_nmape,
                           l.plan.proportion_nmape, l.plan.pickup_error, l.plan.pickup_error_same_day);
  }
}

void write_outputs(const std::filesystem::path& dir, const PipelineInputs& inputs, const PipelineResult& result,
                   const PipelineConfig& config) {
  write_plan_outputs(dir, inputs, result);
  auto summary = open_output(dir / "summary.csv");
  write_summary_header(summary);
  auto occupancy = open_output(dir / "occupancy.csv");
  occupancy << "locker_id,policy,day,peak_occupancy,capacity\n";
  for (std::size_t i = 0; i < result.lockers.size(); ++i) {
    const auto& l = result.lockers[i];
    if (!l.error.empty()) continue;
    for (const auto& r : l.comparison.reports) {
      write_summary_row(summary, r);
      auto trace = open_output(dir / "traces" / fmt::format("{}_{}.csv", l.locker_id, r.policy));
      write_trace(trace, r);
      for (const auto& snap : r.daily) {
        occupancy << fmt::format("{},{},{},{},{}\n", l.locker_id, r.policy, snap.day, snap.total,
                                 inputs.lockers[i].config.capacity);
      }
    }
  }
  auto uplift = open_output(dir / "uplift.csv");
  write_uplift_table(uplift, uplift_table(result));
  auto cfg_out = open_output(dir / "pipeline_used.json");
  cfg_out << config.to_json().dump(2) << '\n';
}

void write_benchmark(const std::filesystem::path& dir, const BenchmarkSuite& suite) {
  const auto inputs = inputs_from_suite(suite);
  std::filesystem::create_directories(dir / "events");
  json lockers = json::array();
  json manifest_lockers = json::array();
  auto truth = open_output(dir / "dwell_truth.csv");
  truth << "locker_id,ship_option,dwell,probability\n";
  for (std::size_t i = 0; i < inputs.lockers.size(); ++i) {
    const auto& l = inputs.lockers[i];
    const auto file = std::filesystem::path("events") / (l.config.locker_id + ".csv");
    write_event_file(dir / file, l.events);
    lockers.push_back(locker_to_json(l.config, l.tier));
    manifest_lockers.push_back({{"locker_id", l.config.locker_id},
                                {"tier", l.tier},
                                {"capacity", l.config.capacity},
                                {"zip", l.config.zip},
                                {"events_file", file.string()},
                                {"event_count", l.events.size()}});
    for (const auto& o : suite.spec.lockers[i].options) {
      for (int k = 0; k < kDwellClasses; ++k) {
        truth << fmt::format("{},{},{},{}\n", l.config.locker_id, o.option.id, k, o.dwell.probs[k]);
      }
    }
  }
  {
    auto out = open_output(dir / "lockers.json");
    out << json{{"lockers", lockers}}.dump(2) << '\n';
  }
  {
    auto out = open_output(dir / "home_deliveries.csv");
    inputs.home.write(out);
  }
  PipelineConfig cfg;
  cfg.events = "events";
  cfg.home_deliveries = "home_deliveries.csv";
  cfg.lockers = "lockers.json";
  cfg.models_dir = "models";
  cfg.output_dir = "out";
  cfg.epoch = suite.spec.calendar.epoch_string();
  cfg.run_date = suite.history_end;
  cfg.window_first = suite.window_first;
  cfg.window_last = suite.window_last;
  cfg.workload_seed = suite.spec.seed;
  {
    auto out = open_output(dir / "pipeline.json");
    out << cfg.to_json().dump(2) << '\n';
  }
  auto out = open_output(dir / "manifest.json");
  out << json{{"seed", suite.spec.seed},
              {"epoch", suite.spec.calendar.epoch_string()},
              {"first_day", suite.spec.first_day},
              {"last_day", suite.spec.last_day},
              {"history_end", suite.history_end},
              {"window", {{"first", suite.window_first}, {"last", suite.window_last}}},
              {"lockers", manifest_lockers}}
             .dump(2)
      << '\n';
}

}  // namespace locker
