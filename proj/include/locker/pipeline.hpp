#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "locker/calendar.hpp"
#include "locker/dwell.hpp"
#include "locker/forecast.hpp"
#include "locker/optimize.hpp"
#include "locker/simulate.hpp"
#include "locker/workload.hpp"

namespace locker {

enum class Cadence { Daily, Weekly };

Cadence parse_cadence(std::string_view text);
LimitMode parse_limit_mode(std::string_view text);

struct PipelineConfig {
  std::filesystem::path events;           // event file, or a directory of *.csv event files
  std::filesystem::path home_deliveries;
  std::filesystem::path lockers;          // lockers.json
  std::filesystem::path models_dir = "models";
  std::filesystem::path output_dir = "out";
  std::vector<std::string> locker_ids;    // empty selects every locker
  std::string epoch = "2018-04-14";
  int horizon = 7;
  int run_date = 0;
  int window_first = 1;
  int window_last = 15;
  std::uint64_t forecast_seed = 11;
  std::uint64_t dwell_seed = 23;
  std::uint64_t workload_seed = 1;
  std::vector<PolicyKind> policies{PolicyKind::Fcfs, PolicyKind::ProportionRule, PolicyKind::Reservation};
  ForestParams forecast_forest;
  ForecastWindow forecast_window;
  DwellParams dwell;
  double safety_margin = 0.0;
  Cadence cadence = Cadence::Daily;
  bool count_rejected_demand = true;
  LimitMode limit_mode = LimitMode::Nested;
  int workers = 0;  // 0 = OpenMP default

  void validate() const;
  // Keys present in `j` override `start`; relative paths resolve against `base`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base,
                                  PipelineConfig start);
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
  static PipelineConfig load(const std::filesystem::path& path, PipelineConfig start);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

nlohmann::json locker_to_json(const LockerConfig& config, const std::string& tier = {});
LockerConfig locker_from_json(const nlohmann::json& j);

struct LockerData {
  LockerConfig config;
  std::string tier;
  std::vector<PackageEvent> events;
};

struct PipelineInputs {
  Calendar calendar;
  HomeDeliveries home;
  std::vector<LockerData> lockers;
};

PipelineInputs load_inputs(const PipelineConfig& config);

struct IngestDiagnostic {
  std::string source;
  std::size_t line = 0;
  std::string order_id;
  std::string message;
};

struct IngestResult {
  std::vector<PackageEvent> events;  // sorted, invariant-clean
  std::vector<IngestDiagnostic> diagnostics;
  std::size_t records_read = 0;
  std::size_t records_dropped = 0;
};

// Parses every file, drops malformed records and records that break an order
// invariant, and sorts what remains.
IngestResult ingest_events(std::span<const std::filesystem::path> files);
PipelineInputs inputs_from_suite(const BenchmarkSuite& suite);

// Per-locker trained state; dwell models are shared by every locker of a zip.
struct LockerModels {
  DeliveryHistory deliveries;
  DwellHistory dwell_history;
  DemandModel demand;
  std::shared_ptr<const DwellModel> dwell;
  std::vector<DwellPmf> guard_pmfs;  // empirical per-option pmfs for the occupancy guard
};

std::vector<LockerModels> train_models(const PipelineInputs& inputs, const PipelineConfig& config,
                                       Execution exec = Execution::Parallel);

struct LockerPlan {
  DemandForecast forecast;
  PresenceMatrix presence;
  Carryover carryover;
  ReservationPlan plan;
  double forecast_nmape = -1.0;     // -1 when actuals are not in the log
  double proportion_nmape = -1.0;
  double pickup_error = -1.0;
  double pickup_error_same_day = -1.0;
};

LockerPlan plan_locker(const LockerData& locker, const LockerModels& models, const PipelineInputs& inputs,
                       int run_date);

// Re-solves the LP from the replay's own locker state at the end of each day
// (or each seventh day).
class ReservationPlanner : public Planner {
 public:
  ReservationPlanner(const LockerData& locker, const LockerModels& models, const PipelineInputs& inputs,
                     const PipelineConfig& config);
  AdmissionPolicy plan(int run_date, const LockerState& state) override;
  int solves() const { return solves_; }

 private:
  const LockerData& locker_;
  const LockerModels& models_;
  const PipelineInputs& inputs_;
  const PipelineConfig& config_;
  std::optional<int> anchor_;
  AdmissionPolicy cached_;
  int solves_ = 0;
};

AdmissionPolicy proportion_policy(const LockerConfig& locker, const HomeDeliveries& home, const Calendar& calendar,
                                  int first_day, int last_day);

struct LockerResult {
  std::string locker_id;
  std::string tier;
  LockerPlan plan;
  PolicyComparison comparison;
  std::string error;  // non-empty when this locker failed
  std::optional<ErrorKind> error_kind;

  const SimulationReport* report(std::string_view policy) const;
};

struct PipelineResult {
  std::vector<LockerResult> lockers;
  double seconds_train = 0.0;
  double seconds_simulate = 0.0;
};

// Trains, plans and replays every locker. Lockers fan out across OpenMP
// threads under Execution::Parallel; Execution::Serial is the reference loop.
PipelineResult run_pipeline(const PipelineInputs& inputs, const PipelineConfig& config,
                            Execution exec = Execution::Parallel);
PipelineResult simulate_all(const PipelineInputs& inputs, const std::vector<LockerModels>& models,
                            const PipelineConfig& config, Execution exec = Execution::Parallel);
// Plans only; comparison is left empty.
PipelineResult plan_all(const PipelineInputs& inputs, const std::vector<LockerModels>& models,
                        const PipelineConfig& config, Execution exec = Execution::Parallel);
// With `fixed_plan`, the reservation policy replays those limits without
// re-solving.
LockerResult simulate_locker(const LockerData& locker, const LockerModels& models, const PipelineInputs& inputs,
                             const PipelineConfig& config, const ReservationPlan* fixed_plan = nullptr);

struct UpliftRow {
  std::string locker_id;
  std::string tier;
  std::map<std::string, int> throughput;  // by policy name
  double uplift_vs_fcfs = 0.0;
  double uplift_vs_proportion = 0.0;
};

// Rows sorted by decreasing uplift over FCFS, then locker id.
std::vector<UpliftRow> uplift_table(const PipelineResult& result);
void write_uplift_table(std::ostream& out, const std::vector<UpliftRow>& rows);

// Reads what write_models wrote; histories and guard pmfs are rebuilt.
std::vector<LockerModels> load_models(const std::filesystem::path& dir, const PipelineInputs& inputs,
                                      const PipelineConfig& config);
void write_models(const std::filesystem::path& dir, const PipelineInputs& inputs, const std::vector<LockerModels>& models);
// plans/<locker>.csv, metrics.csv and errors.csv.
void write_plan_outputs(const std::filesystem::path& dir, const PipelineInputs& inputs, const PipelineResult& result);
// The plan outputs plus summary.csv, uplift.csv, occupancy.csv,
// traces/<locker>_<policy>.csv and pipeline_used.json.
void write_outputs(const std::filesystem::path& dir, const PipelineInputs& inputs, const PipelineResult& result,
                   const PipelineConfig& config);

// Writes events/<locker>.csv, home_deliveries.csv, lockers.json,
// dwell_truth.csv, pipeline.json and manifest.json.
void write_benchmark(const std::filesystem::path& dir, const BenchmarkSuite& suite);

}  // namespace locker
