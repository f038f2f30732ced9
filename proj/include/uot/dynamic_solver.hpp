#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "uot/measures.hpp"
#include "uot/static_solver.hpp"

namespace uot {

// Staggered space-time discretization on [0, 1] x box with T time steps and N
// cells per axis. All quantities are densities (per unit volume).
//   rho:   (T + 1) layers x cells, layer 0 and T hold the marginals
//   omega: per axis, T x interior faces (boundary faces carry zero flux)
//   zeta:  T x cells
// Cells are indexed i0 + N * i1; faces along axis k are indexed like cells
// with N - 1 entries on axis k.
class SpaceTimeField {
 public:
  SpaceTimeField() = default;
  SpaceTimeField(DomainBox domain, int time_steps, int cells_per_axis);

  const DomainBox& domain() const { return domain_; }
  int dimension() const { return domain_.dimension(); }
  int time_steps() const { return T_; }
  int cells_per_axis() const { return N_; }
  std::size_t cell_count() const { return cells_; }
  std::size_t face_count(int axis) const;
  double dt() const { return 1.0 / T_; }
  double dx(int axis) const { return domain_.extent(axis) / N_; }
  double cell_volume() const;
  Point cell_center(std::size_t c) const;

  double& rho(int t, std::size_t c) { return rho_[t * cells_ + c]; }
  double rho(int t, std::size_t c) const { return rho_[t * cells_ + c]; }
  double& omega(int axis, int t, std::size_t f) { return omega_[axis][t * face_count(axis) + f]; }
  double omega(int axis, int t, std::size_t f) const { return omega_[axis][t * face_count(axis) + f]; }
  double& zeta(int t, std::size_t c) { return zeta_[t * cells_ + c]; }
  double zeta(int t, std::size_t c) const { return zeta_[t * cells_ + c]; }

  // Flux through the face on the low / high side of cell c along `axis`
  // (zero on the boundary).
  double flux_low(int axis, int t, std::size_t c) const;
  double flux_high(int axis, int t, std::size_t c) const;
  double divergence(int t, std::size_t c) const;

  // Mass of layer t (sum of rho * cell volume).
  double layer_mass(int t) const;

  std::vector<double>& rho_data() { return rho_; }
  const std::vector<double>& rho_data() const { return rho_; }
  std::vector<double>& omega_data(int axis) { return omega_[axis]; }
  const std::vector<double>& omega_data(int axis) const { return omega_[axis]; }
  std::vector<double>& zeta_data() { return zeta_; }
  const std::vector<double>& zeta_data() const { return zeta_; }

  // Index of the cell at integer coordinates.
  std::size_t cell_index(int i0, int i1) const { return static_cast<std::size_t>(i0) + static_cast<std::size_t>(N_) * i1; }
  std::array<int, 2> cell_coords(std::size_t c) const;
  // Face index along `axis` whose low-side cell is c (requires c not on the high boundary).
  std::size_t face_above(int axis, std::size_t c) const;

 private:
  DomainBox domain_;
  int T_ = 0;
  int N_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> rho_;
  std::array<std::vector<double>, 2> omega_;
  std::vector<double> zeta_;
};

enum class DynamicKind { kWF, kPartial };

// Infinitesimal cost f(rho, omega, zeta): WF (|omega|^2 + delta^2 zeta^2) / (2 rho);
// partial (p = 2) |omega|^2 / (2 rho) + delta |zeta|.
class InfinitesimalCost {
 public:
  static InfinitesimalCost wf(double delta);
  static InfinitesimalCost partial(double delta);

  DynamicKind kind() const { return kind_; }
  double delta() const { return delta_; }

  // omega has `dimension` components. Returns +inf outside the domain of f.
  double evaluate(double rho, const double* omega, int dimension, double zeta) const;
  // Projection onto the polar set B (in place on (a, b[0..d), c)).
  void project_polar(double& a, double* b, int dimension, double& c) const;
  // prox of tau * f by Moreau: z - tau * proj_B(z / tau), in place.
  void prox(double tau, double& rho, double* omega, int dimension, double& zeta) const;
  // Largest constant C with f(rho, omega, 2 zeta) <= C f(rho, omega, zeta).
  double nondegeneracy_constant() const { return kind_ == DynamicKind::kWF ? 4.0 : 2.0; }

  // Pointwise dual constraint violation for a potential with time derivative
  // dt_phi, spatial gradient grad (dimension entries) and value phi; <= 0 is feasible.
  double dual_violation(double dt_phi, const double* grad, int dimension, double phi) const;

  // Static cost with the same dual set: WF(delta) or partial(delta, 2).
  CostFunction static_cost() const;

 private:
  InfinitesimalCost(DynamicKind kind, double delta) : kind_(kind), delta_(delta) {}
  DynamicKind kind_ = DynamicKind::kWF;
  double delta_ = 1.0;
};

struct DynamicConfig {
  int max_iterations = 20000;
  double gamma = 0.0;        // DR step; 0 picks a default from the grid
  double tolerance = 1e-5;   // relative split residual and objective drift between checks
  int check_every = 50;
};

struct DynamicSolution {
  SpaceTimeField field;
  double value = 0.0;                // sum of f over the collocated variables * dt * dx^d
  double residual = 0.0;             // continuity residual of `field`
  double collocation_gap = 0.0;      // || V - I U || between the two splitting blocks
  std::vector<double> potential;     // phi on (T + 1) x cells, from the constraint multipliers
  double dual_value = 0.0;           // int phi(1) drho1 - int phi(0) drho0
  SolveStatus status = SolveStatus::kNotConverged;
  int iterations = 0;

  bool converged() const { return status == SolveStatus::kConverged; }
};

// C_D between the rasterized marginals by Douglas-Rachford splitting.
DynamicSolution solve_dynamic(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                              const InfinitesimalCost& cost, int time_steps, int cells_per_axis,
                              const DynamicConfig& config = {});
DynamicSolution solve_dynamic(const GridDensity& rho0, const GridDensity& rho1, const InfinitesimalCost& cost,
                              int time_steps, const DynamicConfig& config = {});

// l2 norm of (rho_{t+1} - rho_t)/dt + div omega_t - zeta_t over all cells and steps.
double continuity_residual(const SpaceTimeField& field);

// Discrete J_D of a field: f evaluated on time/space-averaged triples.
double dynamic_objective(const SpaceTimeField& field, const InfinitesimalCost& cost);

struct DualResidual {
  double violation = 0.0;  // max over cells of the constraint, clipped at 0 from below
  double objective = 0.0;  // int phi(1) drho1 - int phi(0) drho0
};

// phi on (T + 1) time layers x cells of `field`'s grid; the marginals are read
// from the first and last rho layers.
DualResidual dynamic_dual_residual(const SpaceTimeField& field, const std::vector<double>& phi,
                                   const InfinitesimalCost& cost);

// Velocity and growth-rate fields at (t + 1/2, cell center) for t = 0..T-1.
struct FlowField {
  DomainBox domain;
  int time_steps = 0;
  int cells_per_axis = 0;
  std::vector<double> velocity;  // T x cells x dimension
  std::vector<double> growth;    // T x cells

  // Bilinear in space between cell centers, linear in time between midpoints.
  void sample(double t, const Point& x, double* v, double& alpha) const;
};

// v = omega / rho and alpha = zeta / rho on cells with rho above `floor` times the mean density.
FlowField flow_from_field(const SpaceTimeField& field, double floor = 1e-3);

struct FlowState {
  std::vector<Point> positions;
  std::vector<double> masses;
  int step = 0;
};

// Midpoint integration with multiplicative mass update; returns steps + 1 states.
std::vector<FlowState> integrate_flow(const FlowField& flow, FlowState particles, int steps);

nlohmann::json field_to_json(const SpaceTimeField& field);
// rho of layer t as CSV rows "x1[,x2],density".
std::string layer_to_csv(const SpaceTimeField& field, int t);

DynamicConfig dynamic_config_from_json(const nlohmann::json& j);

}  // namespace uot
