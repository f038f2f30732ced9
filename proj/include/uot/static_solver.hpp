#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "uot/cone_cost.hpp"
#include "uot/measures.hpp"

namespace uot {

// Semi-coupling (gamma0, gamma1) on the dense product of the two atom
// supports. m0(i, j) is mass taken from source atom i, m1(i, j) is mass
// delivered to target atom j; m1 = 0 encodes destruction, m0 = 0 creation.
struct SemiCouplingPlan {
  std::vector<Point> sources;
  std::vector<Point> targets;
  std::vector<double> m0;  // row-major, sources.size() x targets.size()
  std::vector<double> m1;

  SemiCouplingPlan() = default;
  SemiCouplingPlan(std::vector<Point> src, std::vector<Point> dst);

  std::size_t rows() const { return sources.size(); }
  std::size_t cols() const { return targets.size(); }
  double& gamma0(std::size_t i, std::size_t j) { return m0[i * cols() + j]; }
  double& gamma1(std::size_t i, std::size_t j) { return m1[i * cols() + j]; }
  double gamma0(std::size_t i, std::size_t j) const { return m0[i * cols() + j]; }
  double gamma1(std::size_t i, std::size_t j) const { return m1[i * cols() + j]; }

  double mass0() const;
  double mass1() const;
  std::vector<double> first_marginal() const;   // of gamma0
  std::vector<double> second_marginal() const;  // of gamma1

  // J_K: sum over pairs of c(x_i, m0_ij, y_j, m1_ij).
  double objective(const CostFunction& cost) const;
};

// phi, psi are stored in the normalized dual-set units of the cost (divided
// by CostFunction::dual_scale()), so feasibility reads (phi_i, psi_j) in Q.
struct DualCertificate {
  std::vector<double> phi;
  std::vector<double> psi;
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;

  double relative_gap() const;
};

enum class StaticMethod { kAuto, kPrimalDual, kLinearProgram };

struct SolverConfig {
  int max_iterations = 400000;
  // 0 selects the diagonal preconditioner; otherwise uniform steps that must
  // satisfy tau * sigma * ||K||^2 <= 1.
  double primal_step = 0.0;
  double dual_step = 0.0;
  double tolerance = 1e-6;  // relative duality gap
  bool adaptive_restart = true;
  int check_every = 64;
  StaticMethod method = StaticMethod::kAuto;
};

enum class SolveStatus { kConverged, kNotConverged };

struct StaticSolution {
  SemiCouplingPlan plan;
  DualCertificate certificate;
  SolveStatus status = SolveStatus::kNotConverged;
  int iterations = 0;
  // True when one marginal had no atoms and a zero-mass placeholder (the apex)
  // was added to carry created or destroyed mass.
  bool virtual_apex = false;

  double value() const { return certificate.primal; }
  bool converged() const { return status == SolveStatus::kConverged; }
};

// Largest singular value of the marginal operator of an n x m plan, estimated
// by power iteration.
double marginal_operator_norm(std::size_t n, std::size_t m, int iterations = 50);

// C_K(rho0, rho1) with primal plan and dual certificate. PDHG for WF; a dense
// simplex for the piecewise-linear partial and classical costs. Returns the best
// iterate with status kNotConverged when the gap target is not met.
StaticSolution solve_static(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                            const CostFunction& cost, const SolverConfig& config = {});

// Dual feasibility check of a certificate against the measures' supports.
bool certificate_feasible(const DualCertificate& cert, const DiscreteMeasure& rho0,
                          const DiscreteMeasure& rho1, const CostFunction& cost,
                          double slack = 1e-9);

struct BruteForceResult {
  double value = 0.0;
  double grid_error = 0.0;  // improvement of the polish over the best grid point
};

// Independent oracle for tiny instances (at most 3 atoms per side): exhaustive
// grid over the dual potentials of the smaller side, c-transform on the other,
// then Nelder-Mead polish. Concavity of the dual makes the polish global.
BruteForceResult brute_force_CK(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                const CostFunction& cost, int grid_resolution = 200);

struct TriangleCheck {
  double slack = 0.0;      // C01^{1/p} + C12^{1/p} - C02^{1/p} on primal values
  double tolerance = 0.0;  // derived from the three duality gaps
  bool passed = false;
};

TriangleCheck check_triangle(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                             const DiscreteMeasure& rho2, const CostFunction& cost,
                             const SolverConfig& config = {});

struct ContinuityTrend {
  std::vector<double> values;
  bool passed = false;
};

// C_K(rho_n, rho) for rho_n = rho quantized to 2^(n+1) cells per axis,
// n = 1..levels. Passes when the last value is 10x below the first or below 1e-4.
ContinuityTrend check_weakstar_continuity(const DiscreteMeasure& rho, int levels,
                                          const CostFunction& cost, const SolverConfig& config = {});
ContinuityTrend weakstar_trend(const std::vector<double>& values);

// Moves every atom to the center of its cell on a grid with `cells` cells per
// axis, merging atoms that share a cell.
DiscreteMeasure quantize(const DiscreteMeasure& rho, int cells);

// J_delta of the modified static WF problem (diverging mass term removed).
double gamma_functional(const SemiCouplingPlan& plan, double delta);
// Limit functional: 0 if a plan vanishes, sqrt(alpha)/2 * int |x - y|^2 dgamma0
// if gamma1 = alpha gamma0, +inf otherwise. Proportionality is tested to
// `rel_tol` relative.
double gamma_limit_functional(const SemiCouplingPlan& plan, double rel_tol = 1e-9);
// Sum of sqrt(m0_ij m1_ij) over the common support.
double sqrt_measure(const SemiCouplingPlan& plan);

// Optimal value of the limit problem: classical quadratic transport between
// the normalized marginals, scaled by sqrt(mass0 mass1)/2.
double gamma_limit_value(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1);

// inf over sub-couplings (marginals bounded by rho0, rho1) of
// int (|x1 - x0|^p / p - 2 delta) dgamma.
double partial_lagrangian_value(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                                double delta, int p);

SolverConfig solver_config_from_json(const nlohmann::json& j);
nlohmann::json solution_to_json(const StaticSolution& solution);

}  // namespace uot
