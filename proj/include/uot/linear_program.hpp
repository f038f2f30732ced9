#pragma once

#include <vector>

#include <Eigen/Dense>

namespace uot {

enum class RowSense { kEqual, kLessEqual, kGreaterEqual };

// min c^T x  subject to  A x (sense) b,  x >= 0.
struct LinearProgram {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<RowSense> senses;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit, kNumericalFailure };

const char* to_string(LpStatus status);

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  Eigen::VectorXd x;
  // Row multipliers y of the dual  max b^T y  s.t.  A^T y <= c  (sign-restricted
  // per row sense). Valid only when status == kOptimal.
  Eigen::VectorXd duals;
  double objective = 0.0;
  int pivots = 0;
};

// Dense two-phase tableau simplex: smallest-index entering column, Harris ratio test. Intended for the small
// instances this library produces (a few hundred columns at most).
LpSolution solve_lp(const LinearProgram& lp, int max_pivots = 100000);

}  // namespace uot
