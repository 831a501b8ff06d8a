#pragma once

#include <vector>

namespace locker {

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Constraint {
  std::vector<double> coeffs;  // dense, one per variable
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

// maximize objective . x  subject to constraints, x >= 0.
// Among primary optima, `secondary` (if non-empty) is maximized next.
struct LinearProgram {
  int variables = 0;
  std::vector<double> objective;
  std::vector<double> secondary;
  std::vector<Constraint> constraints;
};

struct SimplexResult {
  std::vector<double> x;
  double objective = 0.0;
  int pivots = 0;
};

// Dense two-phase tableau simplex with Bland's rule. Throws Solver on
// infeasible or unbounded programs.
SimplexResult solve_simplex(const LinearProgram& lp);

}  // namespace locker
