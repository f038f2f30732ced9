#include "uot/linear_program.hpp"

#include <cmath>
#include <limits>

#include "uot/error.hpp"

namespace uot {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-12;
constexpr double kCostTol = 1e-11;

class Tableau {
 public:
  Tableau(Eigen::MatrixXd body, Eigen::VectorXd rhs, std::vector<int> basis)
      : t_(std::move(body)), rhs_(std::move(rhs)), basis_(std::move(basis)) {}

  int rows() const { return static_cast<int>(t_.rows()); }
  int cols() const { return static_cast<int>(t_.cols()); }
  const std::vector<int>& basis() const { return basis_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  double at(int i, int j) const { return t_(i, j); }

  // Runs the simplex method on `cost` restricted to columns with allowed[j].
  LpStatus optimize(const Eigen::VectorXd& cost, const std::vector<bool>& allowed, int& pivots,
                    int max_pivots) {
    Eigen::VectorXd reduced = cost;
    for (int i = 0; i < rows(); ++i) reduced -= cost[basis_[i]] * t_.row(i).transpose();
    while (true) {
      int enter = -1;
      for (int j = 0; j < cols(); ++j) {
        if (allowed[j] && reduced[j] < -kCostTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return LpStatus::kOptimal;
      // Two-pass (Harris) ratio test: among rows whose ratio is within a small
      // feasibility tolerance of the minimum, take the largest pivot element.
      double bound = std::numeric_limits<double>::infinity();
      for (int i = 0; i < rows(); ++i) {
        if (t_(i, enter) > kPivotTol) bound = std::min(bound, (std::max(rhs_[i], 0.0) + kFeasTol) / t_(i, enter));
      }
      int leave = -1;
      for (int i = 0; i < rows(); ++i) {
        const double a = t_(i, enter);
        if (a <= kPivotTol || std::max(rhs_[i], 0.0) / a > bound) continue;
        if (leave < 0 || a > t_(leave, enter) * (1.0 + 1e-9) ||
            (a >= t_(leave, enter) * (1.0 - 1e-9) && basis_[i] < basis_[leave])) {
          leave = i;
        }
      }
      if (leave < 0) return LpStatus::kUnbounded;
      if (++pivots > max_pivots) return LpStatus::kIterationLimit;
      pivot(leave, enter);
      reduced -= reduced[enter] * t_.row(leave).transpose();
    }
  }

  void pivot(int row, int col) {
    const double p = t_(row, col);
    t_.row(row) /= p;
    rhs_[row] /= p;
    for (int i = 0; i < rows(); ++i) {
      if (i == row) continue;
      const double f = t_(i, col);
      if (f != 0.0) {
        t_.row(i) -= f * t_.row(row);
        rhs_[i] -= f * rhs_[row];
      }
    }
    for (int i = 0; i < rows(); ++i) rhs_[i] = std::max(rhs_[i], 0.0);
    basis_[row] = col;
  }

 private:
  Eigen::MatrixXd t_;
  Eigen::VectorXd rhs_;
  std::vector<int> basis_;
};

}  // namespace

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kIterationLimit: return "pivot limit reached";
    case LpStatus::kNumericalFailure: return "numerical failure";
  }
  return "unknown";
}

LpSolution solve_lp(const LinearProgram& lp, int max_pivots) {
  const int m = static_cast<int>(lp.A.rows());
  const int n = static_cast<int>(lp.A.cols());
  if (lp.b.size() != m || lp.c.size() != n || static_cast<int>(lp.senses.size()) != m) {
    throw Error(ErrorCode::kInvalidArgument, "linear program dimensions are inconsistent");
  }

  // Normalize to b >= 0.
  Eigen::MatrixXd A = lp.A;
  Eigen::VectorXd b = lp.b;
  std::vector<RowSense> senses = lp.senses;
  std::vector<double> flip(m, 1.0);
  for (int i = 0; i < m; ++i) {
    if (b[i] < 0.0) {
      A.row(i) *= -1.0;
      b[i] = -b[i];
      flip[i] = -1.0;
      if (senses[i] == RowSense::kLessEqual) {
        senses[i] = RowSense::kGreaterEqual;
      } else if (senses[i] == RowSense::kGreaterEqual) {
        senses[i] = RowSense::kLessEqual;
      }
    }
  }

  int n_slack = 0;
  int n_art = 0;
  for (RowSense s : senses) {
    if (s != RowSense::kEqual) ++n_slack;
    if (s != RowSense::kLessEqual) ++n_art;
  }
  const int total = n + n_slack + n_art;
  const int first_art = n + n_slack;

  Eigen::MatrixXd body = Eigen::MatrixXd::Zero(m, total);
  body.leftCols(n) = A;
  std::vector<int> basis(m, -1);
  int slack = n;
  int art = first_art;
  for (int i = 0; i < m; ++i) {
    if (senses[i] == RowSense::kLessEqual) {
      body(i, slack) = 1.0;
      basis[i] = slack++;
    } else if (senses[i] == RowSense::kGreaterEqual) {
      body(i, slack++) = -1.0;
      body(i, art) = 1.0;
      basis[i] = art++;
    } else {
      body(i, art) = 1.0;
      basis[i] = art++;
    }
  }
  const Eigen::MatrixXd standard = body;

  Tableau tab(std::move(body), b, basis);
  LpSolution sol;

  if (n_art > 0) {
    Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(total);
    phase1.tail(n_art).setOnes();
    std::vector<bool> allowed(total, true);
    const LpStatus st = tab.optimize(phase1, allowed, sol.pivots, max_pivots);
    if (st == LpStatus::kIterationLimit) {
      sol.status = st;
      return sol;
    }
    double infeas = 0.0;
    for (int i = 0; i < m; ++i) {
      if (tab.basis()[i] >= first_art) infeas += tab.rhs()[i];
    }
    if (infeas > 1e-9 * std::max(1.0, b.lpNorm<1>())) {
      sol.status = LpStatus::kInfeasible;
      return sol;
    }
    // Drive degenerate artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
      if (tab.basis()[i] < first_art) continue;
      for (int j = 0; j < first_art; ++j) {
        if (std::abs(tab.at(i, j)) > 1e-9) {
          tab.pivot(i, j);
          break;
        }
      }
    }
  }

  Eigen::VectorXd phase2 = Eigen::VectorXd::Zero(total);
  phase2.head(n) = lp.c;
  std::vector<bool> allowed(total, true);
  for (int j = first_art; j < total; ++j) allowed[j] = false;
  sol.status = tab.optimize(phase2, allowed, sol.pivots, max_pivots);
  if (sol.status != LpStatus::kOptimal) return sol;

  Eigen::VectorXd full = Eigen::VectorXd::Zero(total);
  for (int i = 0; i < m; ++i) full[tab.basis()[i]] = tab.rhs()[i];
  sol.x = full.head(n);
  sol.objective = lp.c.dot(sol.x);
  const Eigen::VectorXd r = lp.A * sol.x - lp.b;
  double violation = 0.0;
  for (int i = 0; i < m; ++i) {
    if (lp.senses[i] == RowSense::kEqual) violation = std::max(violation, std::abs(r[i]));
    else if (lp.senses[i] == RowSense::kLessEqual) violation = std::max(violation, r[i]);
    else violation = std::max(violation, -r[i]);
  }
  if (violation > 1e-8 * std::max(1.0, lp.b.lpNorm<Eigen::Infinity>())) {
    sol.status = LpStatus::kNumericalFailure;
    return sol;
  }

  Eigen::MatrixXd basis_matrix(m, m);
  Eigen::VectorXd basis_cost(m);
  for (int i = 0; i < m; ++i) {
    basis_matrix.col(i) = standard.col(tab.basis()[i]);
    basis_cost[i] = phase2[tab.basis()[i]];
  }
  Eigen::VectorXd y = basis_matrix.transpose().fullPivLu().solve(basis_cost);
  for (int i = 0; i < m; ++i) y[i] *= flip[i];
  sol.duals = y;
  return sol;
}

}  // namespace uot
