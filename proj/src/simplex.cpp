#include "locker/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "locker/core.hpp"

namespace locker {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr int kMaxPivots = 100000;

// Tableau rows 0..m-1 are constraints; column `cols` holds the rhs.
class Tableau {
 public:
  Tableau(int rows, int cols) : m_(rows), n_(cols), a_(static_cast<std::size_t>(rows) * (cols + 1), 0.0) {}

  double& at(int r, int c) { return a_[static_cast<std::size_t>(r) * (n_ + 1) + c]; }
  double at(int r, int c) const { return a_[static_cast<std::size_t>(r) * (n_ + 1) + c]; }
  double& rhs(int r) { return at(r, n_); }
  double rhs(int r) const { return at(r, n_); }
  int rows() const { return m_; }
  int cols() const { return n_; }

  void pivot(int r, int c) {
    const double p = at(r, c);
    for (int j = 0; j <= n_; ++j) at(r, j) /= p;
    at(r, c) = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (int j = 0; j <= n_; ++j) at(i, j) -= f * at(r, j);
      at(i, c) = 0.0;
    }
  }

  void drop_row(int r) {
    a_.erase(a_.begin() + static_cast<std::ptrdiff_t>(r) * (n_ + 1),
             a_.begin() + static_cast<std::ptrdiff_t>(r + 1) * (n_ + 1));
    --m_;
  }

 private:
  int m_;
  int n_;
  std::vector<double> a_;
};

struct State {
  Tableau t;
  std::vector<int> basis;
  int pivots = 0;
};

std::vector<double> reduced_costs(const State& st, const std::vector<double>& cost) {
  const int n = st.t.cols();
  std::vector<double> d(cost.begin(), cost.end());
  for (int i = 0; i < st.t.rows(); ++i) {
    const double cb = cost[st.basis[i]];
    if (cb == 0.0) continue;
    for (int j = 0; j < n; ++j) d[j] -= cb * st.t.at(i, j);
  }
  return d;
}

// Maximizes cost . x over columns with allowed[j]; Bland's rule throughout.
void optimize(State& st, const std::vector<double>& cost, const std::vector<char>& allowed) {
  const int n = st.t.cols();
  while (true) {
    const auto d = reduced_costs(st, cost);
    int enter = -1;
    for (int j = 0; j < n; ++j) {
      if (allowed[j] && d[j] > kCostTol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return;
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < st.t.rows(); ++i) {
      const double a = st.t.at(i, enter);
      if (a <= kPivotTol) continue;
      const double ratio = st.t.rhs(i) / a;
      if (ratio < best - 1e-12 || (std::abs(ratio - best) <= 1e-12 && st.basis[i] < st.basis[leave])) {
        best = std::min(best, ratio);
        leave = i;
      }
    }
    if (leave < 0) fail(ErrorKind::Solver, fmt::format("linear program is unbounded (column {})", enter));
    st.t.pivot(leave, enter);
    st.basis[leave] = enter;
    if (++st.pivots > kMaxPivots) fail(ErrorKind::Solver, "simplex pivot limit exceeded");
  }
}

}  // namespace

SimplexResult solve_simplex(const LinearProgram& lp) {
  const int nv = lp.variables;
  if (nv < 1 || static_cast<int>(lp.objective.size()) != nv ||
      (!lp.secondary.empty() && static_cast<int>(lp.secondary.size()) != nv)) {
    fail(ErrorKind::Solver, "linear program dimensions are inconsistent");
  }
  const int m = static_cast<int>(lp.constraints.size());
  int slacks = 0;
  int artificials = 0;
  for (const auto& c : lp.constraints) {
    if (static_cast<int>(c.coeffs.size()) != nv || !std::isfinite(c.rhs)) {
      fail(ErrorKind::Solver, "constraint has the wrong width or a non-finite rhs");
    }
    const bool flip = c.rhs < 0.0;
    Relation rel = c.relation;
    if (flip && rel != Relation::Equal) rel = rel == Relation::LessEqual ? Relation::GreaterEqual : Relation::LessEqual;
    if (rel != Relation::Equal) ++slacks;
    if (rel != Relation::LessEqual) ++artificials;
  }
  const int first_slack = nv;
  const int first_art = nv + slacks;
  const int n = first_art + artificials;

  State st{Tableau(m, n), std::vector<int>(m, -1), 0};
  int next_slack = first_slack;
  int next_art = first_art;
  for (int i = 0; i < m; ++i) {
    const auto& c = lp.constraints[i];
    const double sign = c.rhs < 0.0 ? -1.0 : 1.0;
    Relation rel = c.relation;
    if (sign < 0.0 && rel != Relation::Equal) rel = rel == Relation::LessEqual ? Relation::GreaterEqual : Relation::LessEqual;
    for (int j = 0; j < nv; ++j) st.t.at(i, j) = sign * c.coeffs[j];
    st.t.rhs(i) = sign * c.rhs;
    if (rel == Relation::LessEqual) {
      st.t.at(i, next_slack) = 1.0;
      st.basis[i] = next_slack++;
    } else {
      if (rel == Relation::GreaterEqual) st.t.at(i, next_slack++) = -1.0;
      st.t.at(i, next_art) = 1.0;
      st.basis[i] = next_art++;
    }
  }

  std::vector<char> all(n, 1);
  if (artificials > 0) {
    std::vector<double> phase1(n, 0.0);
    for (int j = first_art; j < n; ++j) phase1[j] = -1.0;
    optimize(st, phase1, all);
    double infeasibility = 0.0;
    for (int i = 0; i < st.t.rows(); ++i) {
      if (st.basis[i] >= first_art) infeasibility += st.t.rhs(i);
    }
    if (infeasibility > 1e-7) {
      fail(ErrorKind::Solver, fmt::format("linear program is infeasible (phase-one residual {:.3g})", infeasibility));
    }
    // Drive zero-level artificials out of the basis; drop redundant rows.
    for (int i = st.t.rows() - 1; i >= 0; --i) {
      if (st.basis[i] < first_art) continue;
      int col = -1;
      for (int j = 0; j < first_art; ++j) {
        if (std::abs(st.t.at(i, j)) > kPivotTol) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        st.t.pivot(i, col);
        st.basis[i] = col;
      } else {
        st.t.drop_row(i);
        st.basis.erase(st.basis.begin() + i);
      }
    }
  }

  std::vector<char> allowed(n, 1);
  for (int j = first_art; j < n; ++j) allowed[j] = 0;
  std::vector<double> cost(n, 0.0);
  std::copy(lp.objective.begin(), lp.objective.end(), cost.begin());
  optimize(st, cost, allowed);

  if (!lp.secondary.empty()) {
    const auto d = reduced_costs(st, cost);
    for (int j = 0; j < n; ++j) {
      if (d[j] < -kCostTol) allowed[j] = 0;
    }
    std::vector<double> cost2(n, 0.0);
    std::copy(lp.secondary.begin(), lp.secondary.end(), cost2.begin());
    optimize(st, cost2, allowed);
  }

  SimplexResult result;
  result.x.assign(nv, 0.0);
  for (int i = 0; i < st.t.rows(); ++i) {
    if (st.basis[i] < nv) result.x[st.basis[i]] = std::max(0.0, st.t.rhs(i));
  }
  for (int j = 0; j < nv; ++j) result.objective += lp.objective[j] * result.x[j];
  result.pivots = st.pivots;
  return result;
}

}  // namespace locker
