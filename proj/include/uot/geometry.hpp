#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uot/measures.hpp"

namespace uot {

// Regular node grid on a box: points[k] nodes per axis including both ends.
struct NodeGrid {
  DomainBox domain;
  std::vector<int> points;

  int dimension() const { return domain.dimension(); }
  std::size_t node_count() const;
  double spacing(int axis) const { return domain.extent(axis) / (points[axis] - 1); }
  Point node(std::size_t index) const;  // index = i0 + points[0] * i1
};

// Homogeneous metric on Omega x R+*:
//   g(x, m)((v, v_m), (v, v_m)) = m gt(x)(v, v) + a(x)(v) v_m + b(x) v_m^2 / m,
// sampled at grid nodes. gt holds 1 entry per node in 1D and (g11, g12, g22)
// in 2D; a holds `dimension` entries per node.
class AdmissibleMetric {
 public:
  AdmissibleMetric(NodeGrid grid, std::vector<double> gt, std::vector<double> a, std::vector<double> b);

  const NodeGrid& grid() const { return grid_; }
  int dimension() const { return grid_.dimension(); }
  const std::vector<double>& gt() const { return gt_; }
  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& b() const { return b_; }

  // Quadratic form at node `index`, mass m > 0, tangent (v, vm).
  double quadratic_form(std::size_t index, double m, const double* v, double vm) const;
  double spatial_form(std::size_t index, const double* v) const;  // gt(v, v)
  double one_form(std::size_t index, const double* v) const;      // a(v)

  // a(v)^2 < 4 b gt(v, v) for all v != 0 at every node (2x2 determinant test).
  bool positive_definite() const;

 private:
  NodeGrid grid_;
  std::vector<double> gt_;
  std::vector<double> a_;
  std::vector<double> b_;
};

struct Diagonalization {
  bool diagonalizable = false;
  double max_curl = 0.0;                 // 2D only: largest discrete curl of a / b
  std::optional<std::vector<double>> lambda;  // per node, lambda(x0) = 1 at the first node
  std::optional<std::vector<double>> c;       // per node
  std::optional<std::vector<double>> g;       // diagonal spatial metric, same layout as gt
};

// Fiber rescaling Phi(x, t) = (x, lambda(x) t) with d(lambda^2)/lambda^2 = a / b
// turning the metric into m g + (c / m) dm^2 with c = b / lambda and
// g = (gt - a a^T / (4 b)) / lambda. In 2D the form a / b must have discrete
// curl below curl_tolerance times its scale (max |a / b| over the shortest box side).
Diagonalization is_diagonalizable(const AdmissibleMetric& metric, double curl_tolerance = 1e-8);

// Largest relative mismatch between the metric and the pullback of the diagonal
// form at random (node, m, v) samples, with dlambda = lambda a / (2 b).
double pullback_error(const AdmissibleMetric& metric, const Diagonalization& diag, int samples,
                      unsigned seed = 7);

// Sectional curvature of the cone metric m g + dm^2 / (4 m) at mass m for a
// base plane of curvature kg: (kg - 1) / m^2.
double cone_sectional_curvature(double kg, double m);

struct HorizontalLift {
  std::vector<double> phi;       // cell centers
  std::vector<double> velocity;  // grad phi at the N - 1 interior faces
  std::vector<double> growth;    // phi / delta^2 at cell centers
  double residual = 0.0;         // l2 norm of the discrete PDE residual
};

// Solves -(rho phi')' + rho phi / delta^2 = X with zero-flux ends on the cell
// grid of `rho` (1D). rho values are cell masses; X is per unit length.
HorizontalLift horizontal_lift(const GridDensity& rho, const std::vector<double>& x, double delta = 1.0);

// 1/2 <phi, X> and the energy 1/2 int (|phi'|^2 + phi^2 / delta^2) rho, which agree.
struct TangentNorm {
  double duality = 0.0;
  double energy = 0.0;
};
TangentNorm wf_tangent_norm(const GridDensity& rho, const std::vector<double>& x, double delta = 1.0);

// Energy 1/2 int (|v|^2 + delta^2 alpha^2) rho of an arbitrary (v at faces,
// alpha at cells), and the residual of -(rho v)' + alpha rho = X.
double lift_energy(const GridDensity& rho, const std::vector<double>& v, const std::vector<double>& alpha,
                   double delta = 1.0);
std::vector<double> lift_constraint(const GridDensity& rho, const std::vector<double>& v,
                                    const std::vector<double>& alpha);

AdmissibleMetric metric_from_json(const nlohmann::json& j);
nlohmann::json diagonalization_to_json(const Diagonalization& d);

}  // namespace uot
