#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "locker/core.hpp"
#include "locker/dwell.hpp"
#include "locker/forecast.hpp"
#include "locker/simplex.hpp"

namespace locker {

// Throughput LP for one locker. Variables are ordered y then x; within each
// block options run fastest first, then by day.
struct LpInstance {
  int options = 0;
  int horizon = 0;
  int capacity = 0;
  std::vector<int> speed_order;  // option indices, fastest first
  Matrix<double> demand;         // S x T
  PresenceMatrix presence;
  Carryover carryover;
  LinearProgram program;

  int variable_count() const { return 2 * options * horizon; }
  int y_index(int option_index, int t) const;
  int x_index(int option_index, int t) const;
  // sum_{v=-6..0} p_svt e_sv
  double carryover_presence(int option_index, int t) const;
};

LpInstance build_lp(const DemandForecast& forecast, const PresenceMatrix& presence,
                    const Carryover& carryover, const LockerConfig& config);

struct ReservationPlan {
  std::string locker_id;
  int run_date = 0;
  Matrix<double> x;             // S x T expected slots reserved
  Matrix<double> y;             // S x T accepted volume
  double objective = 0.0;
  Matrix<int> booking_limits;   // S x T
  int capacity = 0;
};

struct LpResiduals {
  double capacity = 0.0;  // max(sum_s x_st - C, 0)
  double demand = 0.0;    // max(y_st - d_st, 0)
  double equality = 0.0;  // |x_st - expected occupancy term|
  double sign = 0.0;      // max(-y, -x, 0)

  double max() const;
};

LpResiduals residuals(const ReservationPlan& plan, const LpInstance& instance);

// Solves to optimality, recomputes x from y, fills integer booking limits, and
// throws Solver if any residual exceeds 1e-9.
ReservationPlan solve_lp(const LpInstance& instance);

// Per day: floor(y), then round(sum y) - sum floor(y) extra units by largest
// remainder (faster option first on ties), each kept only if integer expected
// occupancy stays within capacity on every day.
Matrix<int> integerize_plan(const ReservationPlan& plan, const LpInstance& instance);

// Left-hand side of the capacity row per day t = 1..T.
std::vector<double> expected_occupancy(const Matrix<double>& y, const PresenceMatrix& presence,
                                       const Carryover& carryover);

// Text format: "# plan <locker> run_date <day> objective <value>" followed by
// a header and rows locker_id,ship_option,day,y_lp,x_lp,booking_limit.
void write_plan(std::ostream& out, const ReservationPlan& plan, const LockerConfig& config);
void write_plan_file(const std::filesystem::path& path, const ReservationPlan& plan, const LockerConfig& config);
ReservationPlan read_plan(std::istream& in, const LockerConfig& config, int horizon);
ReservationPlan read_plan_file(const std::filesystem::path& path, const LockerConfig& config, int horizon);

}  // namespace locker
