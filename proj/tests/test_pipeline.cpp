#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "locker/event_io.hpp"
#include "locker/pipeline.hpp"
#include "support/builders.hpp"
#include "support/tempdir.hpp"

using namespace locker;
using testing_support::slurp;
using testing_support::snapshot;
using testing_support::spit;
using testing_support::TempDir;

namespace {

PipelineConfig quick_config() {
  PipelineConfig c;
  c.forecast_forest = {15, 6, 2, 3};
  c.dwell.forest = {15, 6, 20, 3};
  c.dwell.folds = 2;
  return c;
}

PipelineInputs small_suite(int lockers, PipelineConfig& config) {
  const auto suite = make_benchmark_suite(1, lockers);
  config.run_date = suite.history_end;
  config.window_first = suite.window_first;
  config.window_last = suite.window_last;
  return inputs_from_suite(suite);
}

const std::string kLockers = R"({"lockers": [
  {"locker_id": "A", "capacity": 4, "zip": "98101",
   "ship_options": [{"id": 1, "label": "fast", "speed_rank": 0}, {"id": 2, "label": "slow", "speed_rank": 1}]}
]})";

}  // namespace

TEST(PipelineConfig, JsonRoundTrip) {
  auto c = quick_config();
  c.horizon = 5;
  c.policies = {PolicyKind::Reservation, PolicyKind::Fcfs};
  c.cadence = Cadence::Weekly;
  c.limit_mode = LimitMode::Strict;
  c.safety_margin = 0.25;
  c.locker_ids = {"L01", "L02"};
  const auto j = c.to_json();
  const auto back = PipelineConfig::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(back.dwell, c.dwell);
  EXPECT_EQ(back.forecast_forest, c.forecast_forest);
}

TEST(PipelineConfig, KeysOverrideAndPathsResolve) {
  PipelineConfig start;
  start.horizon = 6;
  const auto j = nlohmann::json::parse(R"({"window": {"first": 3}, "lockers": "lockers.json", "seeds": {"dwell": 5}})");
  const auto c = PipelineConfig::from_json(j, "/data/bench", start);
  EXPECT_EQ(c.horizon, 6);
  EXPECT_EQ(c.window_first, 3);
  EXPECT_EQ(c.window_last, start.window_last);
  EXPECT_EQ(c.dwell_seed, 5u);
  EXPECT_EQ(c.forecast_seed, start.forecast_seed);
  EXPECT_EQ(c.lockers, std::filesystem::path("/data/bench/lockers.json"));
}

TEST(PipelineConfig, InvalidValuesAreConfigErrors) {
  for (const char* text : {R"({"horizon": 8})", R"({"safety_margin": 2})", R"({"cadence": "hourly"})",
                           R"({"policies": ["lottery"]})", R"({"window": {"first": 9, "last": 2}})"}) {
    try {
      PipelineConfig::from_json(nlohmann::json::parse(text)).validate();
      ADD_FAILURE() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig) << text;
    }
  }
}

TEST(LoadInputs, ZeroCapacityLockerIsAConfigError) {
  TempDir dir("zerocap");
  auto text = kLockers;
  text.replace(text.find("\"capacity\": 4"), 13, "\"capacity\": 0");
  spit(dir / "lockers.json", text);
  PipelineConfig c;
  c.lockers = dir / "lockers.json";
  try {
    load_inputs(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(LoadInputs, UnknownSelectedLockerIsAConfigError) {
  TempDir dir("unknown");
  spit(dir / "lockers.json", kLockers);
  PipelineConfig c;
  c.lockers = dir / "lockers.json";
  c.locker_ids = {"B"};
  EXPECT_THROW(load_inputs(c), Error);
  c.locker_ids = {"A"};
  const auto inputs = load_inputs(c);
  ASSERT_EQ(inputs.lockers.size(), 1u);
  EXPECT_EQ(inputs.lockers[0].config.capacity, 4);
  EXPECT_TRUE(inputs.lockers[0].events.empty());
}

TEST(RunPipeline, NoLockersGivesAnEmptyResult) {
  TempDir dir("empty");
  spit(dir / "lockers.json", R"({"lockers": []})");
  auto c = quick_config();
  c.lockers = dir / "lockers.json";
  const auto inputs = load_inputs(c);
  const auto result = run_pipeline(inputs, c);
  EXPECT_TRUE(result.lockers.empty());
  write_outputs(dir / "out", inputs, result, c);
  EXPECT_EQ(slurp(dir / "out" / "uplift.csv").find('\n'), slurp(dir / "out" / "uplift.csv").size() - 1);
}

TEST(IngestEvents, DiagnosticsNameTheOrderAndDropTheRecord) {
  TempDir dir("ingest");
  spit(dir / "a.csv", std::string(kEventHeader) +
                          "\n"
                          "A,o1,Request,1,0,100\n"
                          "A,o1,Delivery,1,1,30000\n"
                          "A,o1,Delivery,1,1,30500\n"
                          "A,o2,Request,1,0,200\n"
                          "A,o2,Pickup,1,1,20000\n"
                          "A,o2,Delivery,1,2,30000\n"
                          "A,o3,Request,9x,0,1\n");
  const std::vector<std::filesystem::path> files{dir / "a.csv"};
  const auto r = ingest_events(files);
  EXPECT_EQ(r.records_read, 7u);
  ASSERT_GE(r.diagnostics.size(), 3u);
  auto names = [&](const std::string& order) {
    return std::any_of(r.diagnostics.begin(), r.diagnostics.end(),
                       [&](const IngestDiagnostic& d) { return d.order_id == order; });
  };
  EXPECT_TRUE(names("o1"));
  EXPECT_TRUE(names("o2"));
  EXPECT_TRUE(std::any_of(r.diagnostics.begin(), r.diagnostics.end(),
                          [](const IngestDiagnostic& d) { return d.line == 8; }));
  EXPECT_EQ(std::count_if(r.events.begin(), r.events.end(),
                          [](const PackageEvent& e) { return e.order_id == "o1" && e.kind == EventKind::Delivery; }),
            1);
  EXPECT_TRUE(validate_events(r.events).empty());
  EXPECT_EQ(r.records_read, r.events.size() + r.records_dropped);
}

TEST(IngestEvents, WellFormedInputPassesThroughSorted) {
  TempDir dir("clean");
  std::vector<PackageEvent> ev;
  testing_support::add_order(ev, "A", "x", 1, 0, 1, 2);
  testing_support::add_order(ev, "A", "y", 2, 0, 2, 5);
  testing_support::add_order(ev, "B", "z", 1, 1, testing_support::kNone);
  auto shuffled = ev;
  std::reverse(shuffled.begin(), shuffled.end());
  std::ostringstream text;
  text << kEventHeader << '\n';
  for (const auto& e : shuffled) {
    text << e.locker_id << ',' << e.order_id << ',' << to_string(e.kind) << ',' << e.ship_option << ',' << e.day
         << ',' << e.seq << '\n';
  }
  spit(dir / "b.csv", text.str());
  const std::vector<std::filesystem::path> files{dir / "b.csv"};
  const auto r = ingest_events(files);
  EXPECT_TRUE(r.diagnostics.empty());
  sort_events(ev);
  EXPECT_EQ(r.events, ev);
  EXPECT_EQ(r.records_dropped, 0u);
}

TEST(WriteBenchmark, SameSeedGivesIdenticalDirectories) {
  TempDir a("bench-a");
  TempDir b("bench-b");
  const auto suite = make_benchmark_suite(1, 3);
  write_benchmark(a.path(), suite);
  write_benchmark(b.path(), suite);
  const auto sa = snapshot(a.path());
  EXPECT_EQ(sa, snapshot(b.path()));
  for (const char* f : {"lockers.json", "home_deliveries.csv", "pipeline.json", "manifest.json", "dwell_truth.csv"}) {
    EXPECT_EQ(sa.count(f), 1u) << f;
  }
  // The written benchmark loads back into the same per-locker streams.
  const auto cfg = PipelineConfig::load(a / "pipeline.json");
  const auto loaded = load_inputs(cfg);
  const auto direct = inputs_from_suite(suite);
  ASSERT_EQ(loaded.lockers.size(), direct.lockers.size());
  for (std::size_t i = 0; i < loaded.lockers.size(); ++i) {
    EXPECT_EQ(loaded.lockers[i].events, direct.lockers[i].events);
    EXPECT_EQ(loaded.lockers[i].config.capacity, direct.lockers[i].config.capacity);
  }
}

TEST(PlanAll, PlanFilesHaveOneRowPerCellAndAreDeterministic) {
  auto cfg = quick_config();
  const auto inputs = small_suite(3, cfg);
  const auto serial_models = train_models(inputs, cfg, Execution::Serial);
  const auto parallel_models = train_models(inputs, cfg, Execution::Parallel);
  TempDir a("plan-a");
  TempDir b("plan-b");
  write_plan_outputs(a.path(), inputs, plan_all(inputs, serial_models, cfg, Execution::Serial));
  write_plan_outputs(b.path(), inputs, plan_all(inputs, parallel_models, cfg, Execution::Parallel));
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
  for (const auto& l : inputs.lockers) {
    std::istringstream in(slurp(a / ("plans/" + l.config.locker_id + ".csv")));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) rows += !line.empty() && line[0] != '#' && line.rfind("locker_id", 0) != 0;
    EXPECT_EQ(rows, l.config.option_count() * cfg.horizon);
    const auto plan = read_plan_file(a / ("plans/" + l.config.locker_id + ".csv"), l.config, cfg.horizon);
    EXPECT_EQ(plan.run_date, cfg.run_date);
  }
}

TEST(RunPipeline, SerialAndParallelFanOutAgree) {
  auto cfg = quick_config();
  const auto inputs = small_suite(3, cfg);
  cfg.window_last = cfg.window_first + 4;
  const auto serial = run_pipeline(inputs, cfg, Execution::Serial);
  const auto parallel = run_pipeline(inputs, cfg, Execution::Parallel);
  ASSERT_EQ(serial.lockers.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(serial.lockers[i].error.empty()) << serial.lockers[i].error;
    ASSERT_EQ(serial.lockers[i].comparison.reports.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(serial.lockers[i].comparison.reports[k], parallel.lockers[i].comparison.reports[k]);
    }
  }
  TempDir a("run-a");
  TempDir b("run-b");
  write_outputs(a.path(), inputs, serial, cfg);
  write_outputs(b.path(), inputs, parallel, cfg);
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
}

TEST(Models, WrittenModelsReloadToTheSamePlans) {
  auto cfg = quick_config();
  const auto inputs = small_suite(3, cfg);
  const auto models = train_models(inputs, cfg);
  TempDir dir("models");
  write_models(dir.path(), inputs, models);
  const auto reloaded = load_models(dir.path(), inputs, cfg);
  ASSERT_EQ(reloaded.size(), models.size());
  TempDir a("models-a");
  TempDir b("models-b");
  write_plan_outputs(a.path(), inputs, plan_all(inputs, models, cfg));
  write_plan_outputs(b.path(), inputs, plan_all(inputs, reloaded, cfg));
  EXPECT_EQ(snapshot(a.path()), snapshot(b.path()));
}
