#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <set>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "locker/core.hpp"
#include "locker/dwell.hpp"
#include "locker/optimize.hpp"

namespace locker {

enum class PolicyKind { Fcfs, ProportionRule, Reservation };
// Strict enforces booking limits as hard caps. Nested also accepts past a
// limit when the projected occupancy still leaves room for the unused limits
// of every other option.
enum class LimitMode { Strict, Nested };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

struct AdmissionPolicy {
  PolicyKind kind = PolicyKind::Fcfs;
  // ProportionRule: slot share per option index; per-delivery-day overrides.
  std::vector<double> shares;
  std::map<int, std::vector<double>> shares_by_day;
  // Reservation: booking limits per option index keyed by delivery day.
  std::map<int, std::vector<int>> limits_by_day;
  LimitMode mode = LimitMode::Nested;
  // Nested mode protects the unused limits of strictly faster options only;
  // empty protects every other option.
  std::vector<int> speed_rank;
  // Delivery days on which the plan fills the locker; only these protect.
  std::set<int> binding_days;

  static AdmissionPolicy fcfs();
  static AdmissionPolicy proportion(std::vector<double> shares);
  static AdmissionPolicy reservation(const ReservationPlan& plan, LimitMode mode = LimitMode::Nested,
                                     std::vector<int> speed_rank = {});

  void validate(int option_count) const;
};

enum class Decision { Accept, Reject };
enum class Reason { Accepted, CapacityFull, LimitExhausted };

std::string_view to_string(Decision d);
std::string_view to_string(Reason r);

struct AdmissionRequest {
  std::string order_id;
  int option_index = 0;
  int day = 0;            // request day
  std::int64_t seq = 0;
  int delivery_day = 0;   // recorded, or request day + lead_days when unrecorded
};

struct DecisionRecord {
  std::string order_id;
  int day = 0;
  int delivery_day = 0;
  int ship_option = 0;
  Decision decision = Decision::Accept;
  Reason reason = Reason::Accepted;
  bool hindsight_space_available = false;
  bool outside_plan = false;  // reservation request past the plan horizon

  bool operator==(const DecisionRecord&) const = default;
};

// Expected-presence occupancy projection shared by every policy.
struct OccupancyGuard {
  std::vector<DwellPmf> pmfs;  // per option index
  double capacity_limit = 0.0; // C minus the safety margin
};

class LockerState {
 public:
  LockerState() = default;
  LockerState(int option_count, int capacity);

  int capacity() const { return capacity_; }
  int option_count() const { return options_; }
  int occupancy() const { return static_cast<int>(occupants_.size()); }
  int day() const { return day_; }
  void set_day(int day) { day_ = day; }

  // Accepted packages (delivered or not) for (option, delivery day).
  int accepted(int option_index, int delivery_day) const;
  // Expected packages present on `day` from current occupants (conditional
  // on still being present) and accepted packages not yet delivered.
  // option_index < 0 sums every option.
  double projected_occupancy(int day, const OccupancyGuard& guard, int option_index = -1) const;
  // Occupants delivered on day_ - 6 .. day_, indexed relative to day_.
  Carryover carryover() const;

  void accept(const std::string& order_id, int option_index, int delivery_day);
  // Returns false (overflow) when the locker is full.
  bool place(const std::string& order_id, int option_index, int delivery_day);
  void remove(const std::string& order_id);
  void expire_awaiting(const std::string& order_id, int option_index, int delivery_day);

 private:
  struct Occupant {
    int option_index;
    int delivery_day;
  };
  int options_ = 0;
  int capacity_ = 0;
  int day_ = 0;
  std::map<std::string, Occupant> occupants_;
  std::map<std::pair<int, int>, int> accepted_;   // (delivery day, option) -> count
  std::map<std::pair<int, int>, int> awaiting_;   // accepted, not yet delivered
};

DecisionRecord fcfs_decide(const LockerState& state, const AdmissionRequest& request, const OccupancyGuard& guard);
DecisionRecord reservation_decide(const LockerState& state, const AdmissionRequest& request,
                                  const AdmissionPolicy& policy, const OccupancyGuard& guard);
DecisionRecord proportion_decide(const LockerState& state, const AdmissionRequest& request,
                                 const AdmissionPolicy& policy, const OccupancyGuard& guard);
DecisionRecord decide(const LockerState& state, const AdmissionRequest& request, const AdmissionPolicy& policy,
                      const OccupancyGuard& guard);

struct ReplayOptions {
  // Requests on days [first_day, last_day] go through the policy; earlier
  // requests follow the log (accepted iff a Delivery is recorded).
  int first_day = std::numeric_limits<int>::min() / 2;
  int last_day = std::numeric_limits<int>::max() / 2;
  std::vector<DwellPmf> guard_pmfs;  // defaults to uniform per option
  double safety_margin = 0.0;        // slots in [0,1] subtracted from C
};

struct SimulationReport {
  std::string policy;
  std::string locker_id;
  int total_requests = 0;
  int accepted = 0;
  int rejected = 0;
  int throughput = 0;          // accepted and placed on or before last_day
  int overflowed = 0;          // accepted but found the locker full
  int beyond_window = 0;       // accepted for delivery after last_day
  int missing_delivery = 0;    // accepted, no Delivery recorded
  int unjustified_rejections = 0;
  int max_occupancy = 0;
  std::vector<OccupancySnapshot> daily;  // peak occupancy per simulated day
  std::vector<DecisionRecord> trace;
  double runtime_seconds = 0.0;  // wall time; excluded from equality and files

  bool operator==(const SimulationReport& other) const;
};

// Called at the end of each day before the next day's requests; returns the
// policy for the following day.
class Planner {
 public:
  virtual ~Planner() = default;
  virtual AdmissionPolicy plan(int run_date, const LockerState& state) = 0;
};

class Replayer {
 public:
  Replayer(std::span<const PackageEvent> events, const LockerConfig& config, const ReplayOptions& options,
           AdmissionPolicy policy, std::string policy_name = {});

  void set_policy(AdmissionPolicy policy);
  void set_planner(Planner* planner) { planner_ = planner; }
  // Processes every event with day <= `day`.
  void run_through(int day);
  SimulationReport finish();
  const LockerState& state() const { return state_; }
  // Orders that physically entered the locker so far, sorted.
  std::vector<std::string> placed_orders() const;

 private:
  struct OrderInfo {
    int option_index = 0;
    int request_day = 0;
    int delivery_day = 0;
    bool recorded_delivery = false;
    bool in_window = false;
    enum class Status { Unseen, Rejected, Awaiting, Placed, Overflowed, Gone } status = Status::Unseen;
    bool placed = false;
    int placed_day = 0;
    int left_day = std::numeric_limits<int>::max();
    std::size_t trace_index = static_cast<std::size_t>(-1);
  };

  void start_day(int day);
  void end_day();
  void handle(const PackageEvent& ev);

  std::vector<PackageEvent> events_;
  LockerConfig config_;
  ReplayOptions options_;
  AdmissionPolicy policy_;
  OccupancyGuard guard_;
  Planner* planner_ = nullptr;
  LockerState state_;
  std::unordered_map<std::string, OrderInfo> orders_;
  std::size_t cursor_ = 0;
  bool day_open_ = false;
  int peak_today_ = 0;
  SimulationReport report_;
};

SimulationReport replay(std::span<const PackageEvent> events, const AdmissionPolicy& policy,
                        const LockerConfig& config, const ReplayOptions& options = {},
                        Planner* planner = nullptr, const std::string& policy_name = {});

// Fraction of requests in `reference` whose decision in `trace` is identical
// (1.0 when the reference is empty). Unmatched requests count as disagreement.
double agreement(std::span<const DecisionRecord> trace, std::span<const DecisionRecord> reference);
// Reference decisions implied by a log: Accept iff a Delivery was recorded.
std::vector<DecisionRecord> decisions_from_log(std::span<const PackageEvent> events, const LockerConfig& config,
                                               int first_day, int last_day);

struct PolicySetup {
  std::string name;
  AdmissionPolicy policy;
  std::shared_ptr<Planner> planner;
};

struct PolicyComparison {
  std::vector<SimulationReport> reports;
  // delta_pct(i, j) = 100 * (throughput_i - throughput_j) / throughput_j (0 when both are 0).
  Matrix<double> delta_pct;
  std::vector<std::size_t> ranking;  // report indices by decreasing uplift over the first policy
};

PolicyComparison compare_policies(std::span<const PackageEvent> events, std::span<const PolicySetup> policies,
                                  const LockerConfig& config, const ReplayOptions& options = {});

double uplift_pct(int throughput, int baseline);

void write_trace(std::ostream& out, const SimulationReport& report);
void write_summary_header(std::ostream& out);
void write_summary_row(std::ostream& out, const SimulationReport& report);

}  // namespace locker
