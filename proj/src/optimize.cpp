#include "locker/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "locker/event_io.hpp"

namespace locker {

int LpInstance::y_index(int s, int t) const {
  const auto pos = std::find(speed_order.begin(), speed_order.end(), s) - speed_order.begin();
  return static_cast<int>(pos) * horizon + (t - 1);
}

int LpInstance::x_index(int s, int t) const { return options * horizon + y_index(s, t); }

double LpInstance::carryover_presence(int s, int t) const {
  double sum = 0.0;
  for (int v = -kMaxDwell; v <= 0; ++v) {
    const int e = carryover.at(s, v);
    if (e != 0) sum += presence.at(s, v, t) * e;
  }
  return sum;
}

LpInstance build_lp(const DemandForecast& forecast, const PresenceMatrix& presence,
                    const Carryover& carryover, const LockerConfig& config) {
  config.validate();
  const int S = config.option_count();
  const int T = forecast.horizon();
  if (forecast.option_count() != S || presence.option_count() != S || carryover.option_count() != S ||
      presence.horizon() != T) {
    fail(ErrorKind::Data,
         fmt::format("LP inputs disagree: {} options in config, forecast {}x{}, presence {}x{}, carryover {}", S,
                     forecast.option_count(), T, presence.option_count(), presence.horizon(),
                     carryover.option_count()));
  }
  if (carryover.total() > config.capacity) {
    fail(ErrorKind::Data, fmt::format("carryover {} exceeds capacity {}", carryover.total(), config.capacity));
  }
  for (double d : forecast.values.values()) {
    if (!std::isfinite(d) || d < 0.0) fail(ErrorKind::Data, "demand forecast has a negative or non-finite entry");
  }

  LpInstance inst;
  inst.options = S;
  inst.horizon = T;
  inst.capacity = config.capacity;
  inst.speed_order = config.speed_order();
  inst.demand = forecast.values;
  inst.presence = presence;
  inst.carryover = carryover;

  const int n = inst.variable_count();
  LinearProgram& lp = inst.program;
  lp.variables = n;
  lp.objective.assign(n, 0.0);
  lp.secondary.assign(n, 0.0);
  for (int k = 0; k < S; ++k) {
    const int s = inst.speed_order[k];
    for (int t = 1; t <= T; ++t) {
      lp.objective[inst.y_index(s, t)] = 1.0;
      lp.secondary[inst.y_index(s, t)] = static_cast<double>(S - k);
    }
  }
  for (int t = 1; t <= T; ++t) {
    Constraint row{std::vector<double>(n, 0.0), Relation::LessEqual, static_cast<double>(config.capacity)};
    for (int s = 0; s < S; ++s) row.coeffs[inst.x_index(s, t)] = 1.0;
    lp.constraints.push_back(std::move(row));
  }
  for (int s : inst.speed_order) {
    for (int t = 1; t <= T; ++t) {
      Constraint row{std::vector<double>(n, 0.0), Relation::LessEqual, forecast.at(s, t)};
      row.coeffs[inst.y_index(s, t)] = 1.0;
      lp.constraints.push_back(std::move(row));
    }
  }
  for (int s : inst.speed_order) {
    for (int t = 1; t <= T; ++t) {
      Constraint row{std::vector<double>(n, 0.0), Relation::Equal, inst.carryover_presence(s, t)};
      row.coeffs[inst.x_index(s, t)] = 1.0;
      for (int v = 1; v <= t; ++v) row.coeffs[inst.y_index(s, v)] -= presence.at(s, v, t);
      lp.constraints.push_back(std::move(row));
    }
  }
  return inst;
}

double LpResiduals::max() const { return std::max({capacity, demand, equality, sign}); }

std::vector<double> expected_occupancy(const Matrix<double>& y, const PresenceMatrix& presence,
                                       const Carryover& carryover) {
  const int S = presence.option_count();
  const int T = presence.horizon();
  std::vector<double> occ(T, 0.0);
  for (int t = 1; t <= T; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int v = -kMaxDwell; v <= 0; ++v) occ[t - 1] += presence.at(s, v, t) * carryover.at(s, v);
      for (int v = 1; v <= t; ++v) occ[t - 1] += presence.at(s, v, t) * y(s, v - 1);
    }
  }
  return occ;
}

LpResiduals residuals(const ReservationPlan& plan, const LpInstance& inst) {
  LpResiduals r;
  for (int t = 1; t <= inst.horizon; ++t) {
    double used = 0.0;
    for (int s = 0; s < inst.options; ++s) {
      const double y = plan.y(s, t - 1);
      const double x = plan.x(s, t - 1);
      used += x;
      r.demand = std::max(r.demand, y - inst.demand(s, t - 1));
      r.sign = std::max({r.sign, -y, -x});
      double rhs = inst.carryover_presence(s, t);
      for (int v = 1; v <= t; ++v) rhs += inst.presence.at(s, v, t) * plan.y(s, v - 1);
      r.equality = std::max(r.equality, std::abs(x - rhs));
    }
    r.capacity = std::max(r.capacity, used - inst.capacity);
  }
  return r;
}

ReservationPlan solve_lp(const LpInstance& inst) {
  const auto result = solve_simplex(inst.program);
  ReservationPlan plan;
  plan.capacity = inst.capacity;
  plan.x = Matrix<double>(inst.options, inst.horizon, 0.0);
  plan.y = Matrix<double>(inst.options, inst.horizon, 0.0);
  for (int s = 0; s < inst.options; ++s) {
    for (int t = 1; t <= inst.horizon; ++t) {
      plan.y(s, t - 1) = std::min(result.x[inst.y_index(s, t)], inst.demand(s, t - 1));
    }
  }
  // x from its defining equality so that the identity holds to rounding.
  for (int s = 0; s < inst.options; ++s) {
    for (int t = 1; t <= inst.horizon; ++t) {
      double x = inst.carryover_presence(s, t);
      for (int v = 1; v <= t; ++v) x += inst.presence.at(s, v, t) * plan.y(s, v - 1);
      plan.x(s, t - 1) = x;
    }
  }
  plan.objective = std::accumulate(plan.y.values().begin(), plan.y.values().end(), 0.0);
  const auto res = residuals(plan, inst);
  if (res.max() > 1e-9) {
    fail(ErrorKind::Solver,
         fmt::format("LP solution residuals too large: capacity {:.3g}, demand {:.3g}, equality {:.3g}, sign {:.3g}",
                     res.capacity, res.demand, res.equality, res.sign));
  }
  plan.booking_limits = integerize_plan(plan, inst);
  return plan;
}

Matrix<int> integerize_plan(const ReservationPlan& plan, const LpInstance& inst) {
  const int S = inst.options;
  const int T = inst.horizon;
  Matrix<int> limits(S, T, 0);
  Matrix<double> as_real(S, T, 0.0);
  for (int s = 0; s < S; ++s) {
    for (int t = 0; t < T; ++t) {
      limits(s, t) = static_cast<int>(std::floor(std::max(0.0, plan.y(s, t)) + 1e-9));
      as_real(s, t) = limits(s, t);
    }
  }
  auto fits = [&] {
    const auto occ = expected_occupancy(as_real, inst.presence, inst.carryover);
    return std::all_of(occ.begin(), occ.end(), [&](double o) { return o <= inst.capacity + 1e-9; });
  };
  for (int t = 0; t < T; ++t) {
    double total = 0.0;
    int floors = 0;
    for (int s = 0; s < S; ++s) {
      total += plan.y(s, t);
      floors += limits(s, t);
    }
    int spare = static_cast<int>(std::llround(total)) - floors;
    std::vector<int> order = inst.speed_order;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return plan.y(a, t) - limits(a, t) > plan.y(b, t) - limits(b, t) + 1e-12;
    });
    for (int s : order) {
      if (spare <= 0) break;
      if (plan.y(s, t) - limits(s, t) <= 1e-9) continue;
      ++limits(s, t);
      as_real(s, t) += 1.0;
      if (fits()) {
        --spare;
      } else {
        --limits(s, t);
        as_real(s, t) -= 1.0;
      }
    }
  }
  return limits;
}

void write_plan(std::ostream& out, const ReservationPlan& plan, const LockerConfig& config) {
  out << fmt::format("# plan {} run_date {} objective {}\n", plan.locker_id, plan.run_date, plan.objective);
  out << "locker_id,ship_option,day,y_lp,x_lp,booking_limit\n";
  for (std::size_t s = 0; s < plan.y.rows(); ++s) {
    for (std::size_t t = 0; t < plan.y.cols(); ++t) {
      out << fmt::format("{},{},{},{},{},{}\n", plan.locker_id, config.ship_options[s].id,
                         plan.run_date + static_cast<int>(t) + 1, plan.y(s, t), plan.x(s, t),
                         plan.booking_limits(s, t));
    }
  }
}

void write_plan_file(const std::filesystem::path& path, const ReservationPlan& plan, const LockerConfig& config) {
  auto out = open_output(path);
  write_plan(out, plan, config);
}

ReservationPlan read_plan(std::istream& in, const LockerConfig& config, int horizon) {
  ReservationPlan plan;
  plan.locker_id = config.locker_id;
  plan.capacity = config.capacity;
  const int S = config.option_count();
  plan.x = Matrix<double>(S, horizon, 0.0);
  plan.y = Matrix<double>(S, horizon, 0.0);
  plan.booking_limits = Matrix<int>(S, horizon, 0);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<char> seen(static_cast<std::size_t>(S) * horizon, 0);
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text.starts_with("#")) {
      std::istringstream head{std::string(text)};
      std::string hash, word, id, rd, obj;
      if (head >> hash >> word >> id >> rd >> plan.run_date >> obj >> plan.objective && word == "plan") {
        have_header = true;
      }
      continue;
    }
    if (text.starts_with("locker_id")) continue;
    const auto f = split_fields(text);
    if (f.size() != 6) fail(ErrorKind::Data, fmt::format("plan line {}: expected 6 fields", line_no));
    if (!config.locker_id.empty() && f[0] != config.locker_id) continue;
    try {
      const int s = config.option_index(std::stoi(std::string(f[1])));
      const int t = std::stoi(std::string(f[2])) - plan.run_date;
      if (t < 1 || t > horizon) fail(ErrorKind::Data, fmt::format("plan line {}: day outside horizon", line_no));
      plan.y(s, t - 1) = std::stod(std::string(f[3]));
      plan.x(s, t - 1) = std::stod(std::string(f[4]));
      plan.booking_limits(s, t - 1) = std::stoi(std::string(f[5]));
      seen[static_cast<std::size_t>(s) * horizon + (t - 1)] = 1;
    } catch (const std::logic_error&) {
      fail(ErrorKind::Data, fmt::format("plan line {}: malformed number", line_no));
    }
  }
  if (!have_header) fail(ErrorKind::Data, "plan file lacks its '# plan' header");
  if (std::count(seen.begin(), seen.end(), 0) > 0) fail(ErrorKind::Data, "plan file does not cover every (option, day)");
  return plan;
}

ReservationPlan read_plan_file(const std::filesystem::path& path, const LockerConfig& config, int horizon) {
  auto in = open_input(path);
  return read_plan(in, config, horizon);
}

}  // namespace locker
