#include "uot/dynamic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <fmt/format.h>

namespace uot {

SpaceTimeField::SpaceTimeField(DomainBox domain, int time_steps, int cells_per_axis)
    : domain_(std::move(domain)), T_(time_steps), N_(cells_per_axis) {
  if (T_ < 1 || N_ < 2) throw Error(ErrorCode::kInvalidArgument, "need T >= 1 and N >= 2");
  cells_ = 1;
  for (int k = 0; k < dimension(); ++k) cells_ *= static_cast<std::size_t>(N_);
  rho_.assign(static_cast<std::size_t>(T_ + 1) * cells_, 0.0);
  for (int k = 0; k < dimension(); ++k) omega_[k].assign(static_cast<std::size_t>(T_) * face_count(k), 0.0);
  zeta_.assign(static_cast<std::size_t>(T_) * cells_, 0.0);
}

std::size_t SpaceTimeField::face_count(int axis) const {
  if (axis >= dimension()) return 0;
  return cells_ / static_cast<std::size_t>(N_) * static_cast<std::size_t>(N_ - 1);
}

double SpaceTimeField::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dimension(); ++k) v *= dx(k);
  return v;
}

std::array<int, 2> SpaceTimeField::cell_coords(std::size_t c) const {
  return {static_cast<int>(c % static_cast<std::size_t>(N_)), static_cast<int>(c / static_cast<std::size_t>(N_))};
}

Point SpaceTimeField::cell_center(std::size_t c) const {
  const auto ij = cell_coords(c);
  Point p(dimension());
  for (int k = 0; k < dimension(); ++k) p[k] = domain_.lower()[k] + (ij[k] + 0.5) * dx(k);
  return p;
}

std::size_t SpaceTimeField::face_above(int axis, std::size_t c) const {
  const auto ij = cell_coords(c);
  if (axis == 0) return static_cast<std::size_t>(ij[0]) + static_cast<std::size_t>(N_ - 1) * ij[1];
  return static_cast<std::size_t>(ij[0]) + static_cast<std::size_t>(N_) * ij[1];
}

double SpaceTimeField::flux_low(int axis, int t, std::size_t c) const {
  const auto ij = cell_coords(c);
  if (ij[axis] == 0) return 0.0;
  const std::size_t below = axis == 0 ? c - 1 : c - static_cast<std::size_t>(N_);
  return omega(axis, t, face_above(axis, below));
}

double SpaceTimeField::flux_high(int axis, int t, std::size_t c) const {
  const auto ij = cell_coords(c);
  if (ij[axis] == N_ - 1) return 0.0;
  return omega(axis, t, face_above(axis, c));
}

double SpaceTimeField::divergence(int t, std::size_t c) const {
  double div = 0.0;
  for (int k = 0; k < dimension(); ++k) div += (flux_high(k, t, c) - flux_low(k, t, c)) / dx(k);
  return div;
}

double SpaceTimeField::layer_mass(int t) const {
  double s = 0.0;
  for (std::size_t c = 0; c < cells_; ++c) s += rho(t, c);
  return s * cell_volume();
}

InfinitesimalCost InfinitesimalCost::wf(double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  return {DynamicKind::kWF, delta};
}

InfinitesimalCost InfinitesimalCost::partial(double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  return {DynamicKind::kPartial, delta};
}

CostFunction InfinitesimalCost::static_cost() const {
  return kind_ == DynamicKind::kWF ? CostFunction::wf(delta_) : CostFunction::partial(delta_, 2);
}

double InfinitesimalCost::evaluate(double rho, const double* omega, int dimension, double zeta) const {
  double w2 = 0.0;
  for (int k = 0; k < dimension; ++k) w2 += omega[k] * omega[k];
  if (kind_ == DynamicKind::kWF) {
    const double num = w2 + delta_ * delta_ * zeta * zeta;
    if (rho > 0.0) return num / (2.0 * rho);
    return (rho == 0.0 && num == 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  }
  if (rho > 0.0) return w2 / (2.0 * rho) + delta_ * std::abs(zeta);
  return (rho == 0.0 && w2 == 0.0) ? delta_ * std::abs(zeta) : std::numeric_limits<double>::infinity();
}

namespace {

// Root of the decreasing convex function a - l + s_b / (1 + l)^2 + s_c / (1 + l k)^2
// for l >= 0, given that it is positive at l = 0. Newton from the left never overshoots.
double polar_multiplier(double a, double sb, double sc, double k) {
  double l = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double e = 1.0 + l;
    const double g = 1.0 + l * k;
    const double h = a - l + sb / (e * e) + sc / (g * g);
    const double dh = -1.0 - 2.0 * sb / (e * e * e) - 2.0 * k * sc / (g * g * g);
    const double next = l - h / dh;
    if (!(next > l) || next - l <= 1e-15 * std::max(1.0, l)) return std::max(next, l);
    l = next;
  }
  throw Error(ErrorCode::kNoConvergence, "polar projection: Newton exceeded 100 iterations");
}

}  // namespace

void InfinitesimalCost::project_polar(double& a, double* b, int dimension, double& c) const {
  double b2 = 0.0;
  for (int k = 0; k < dimension; ++k) b2 += b[k] * b[k];
  if (kind_ == DynamicKind::kWF) {
    const double d2 = delta_ * delta_;
    if (a + 0.5 * b2 + 0.5 * c * c / d2 <= 0.0) return;
    const double l = polar_multiplier(a, 0.5 * b2, 0.5 * c * c / d2, 1.0 / d2);
    a -= l;
    for (int k = 0; k < dimension; ++k) b[k] /= 1.0 + l;
    c /= 1.0 + l / d2;
    return;
  }
  c = std::clamp(c, -delta_, delta_);
  if (a + 0.5 * b2 <= 0.0) return;
  const double l = polar_multiplier(a, 0.5 * b2, 0.0, 0.0);
  a -= l;
  for (int k = 0; k < dimension; ++k) b[k] /= 1.0 + l;
}

void InfinitesimalCost::prox(double tau, double& rho, double* omega, int dimension, double& zeta) const {
  // Closed forms of z - tau * proj_B(z / tau) in terms of the multiplier, so
  // that rho = 0 comes out together with omega = 0 exactly.
  const double a = rho / tau;
  double b2 = 0.0;
  for (int k = 0; k < dimension; ++k) b2 += omega[k] * omega[k];
  b2 /= tau * tau;
  const double c = zeta / tau;
  if (kind_ == DynamicKind::kWF) {
    const double d2 = delta_ * delta_;
    if (a + 0.5 * b2 + 0.5 * c * c / d2 <= 0.0) {
      rho = 0.0;
      for (int k = 0; k < dimension; ++k) omega[k] = 0.0;
      zeta = 0.0;
      return;
    }
    const double l = polar_multiplier(a, 0.5 * b2, 0.5 * c * c / d2, 1.0 / d2);
    rho = tau * l;
    for (int k = 0; k < dimension; ++k) omega[k] *= l / (1.0 + l);
    zeta *= (l / d2) / (1.0 + l / d2);
    return;
  }
  zeta = std::copysign(std::max(std::abs(zeta) - tau * delta_, 0.0), zeta);
  if (a + 0.5 * b2 <= 0.0) {
    rho = 0.0;
    for (int k = 0; k < dimension; ++k) omega[k] = 0.0;
    return;
  }
  const double l = polar_multiplier(a, 0.5 * b2, 0.0, 0.0);
  rho = tau * l;
  for (int k = 0; k < dimension; ++k) omega[k] *= l / (1.0 + l);
}

double InfinitesimalCost::dual_violation(double dt_phi, const double* grad, int dimension, double phi) const {
  double g2 = 0.0;
  for (int k = 0; k < dimension; ++k) g2 += grad[k] * grad[k];
  if (kind_ == DynamicKind::kWF) return dt_phi + 0.5 * g2 + 0.5 * phi * phi / (delta_ * delta_);
  return std::max(dt_phi + 0.5 * g2, std::abs(phi) - delta_);
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// Layout of the free unknowns U: interior rho layers, fluxes per axis, sources.
struct Layout {
  int T = 0;
  int d = 1;
  std::size_t C = 0;
  std::array<std::size_t, 2> F{0, 0};
  std::size_t rho0 = 0, omega0[2] = {0, 0}, zeta0 = 0, size = 0;

  explicit Layout(const SpaceTimeField& f) : T(f.time_steps()), d(f.dimension()), C(f.cell_count()) {
    for (int k = 0; k < d; ++k) F[k] = f.face_count(k);
    std::size_t off = 0;
    rho0 = off;
    off += static_cast<std::size_t>(T - 1) * C;
    for (int k = 0; k < d; ++k) {
      omega0[k] = off;
      off += static_cast<std::size_t>(T) * F[k];
    }
    zeta0 = off;
    off += static_cast<std::size_t>(T) * C;
    size = off;
  }
  // Free rho index of layer t in 1..T-1.
  std::size_t rho(int t, std::size_t c) const { return rho0 + static_cast<std::size_t>(t - 1) * C + c; }
  std::size_t omega(int k, int t, std::size_t f) const { return omega0[k] + static_cast<std::size_t>(t) * F[k] + f; }
  std::size_t zeta(int t, std::size_t c) const { return zeta0 + static_cast<std::size_t>(t) * C + c; }
  std::size_t stride() const { return static_cast<std::size_t>(d) + 2; }
  std::size_t collocated() const { return static_cast<std::size_t>(T) * C * stride(); }
};

// Calls visit(face index) for the low/high face of cell c along axis k if interior.
template <class F>
void for_faces(const SpaceTimeField& f, int k, std::size_t c, F&& visit) {
  const auto ij = f.cell_coords(c);
  const int N = f.cells_per_axis();
  if (ij[k] > 0) {
    const std::size_t below = k == 0 ? c - 1 : c - static_cast<std::size_t>(N);
    visit(f.face_above(k, below), -1);
  }
  if (ij[k] < N - 1) visit(f.face_above(k, c), +1);
}

// Continuity operator on U: rows (t, c) -> (rho_{t+1} - rho_t)/dt + div omega_t - zeta_t.
SpMat continuity_matrix(const SpaceTimeField& f, const Layout& L) {
  Triplets tr;
  const double dt = f.dt();
  for (int t = 0; t < L.T; ++t) {
    for (std::size_t c = 0; c < L.C; ++c) {
      const auto row = static_cast<int>(static_cast<std::size_t>(t) * L.C + c);
      if (t + 1 < L.T) tr.emplace_back(row, static_cast<int>(L.rho(t + 1, c)), 1.0 / dt);
      if (t > 0) tr.emplace_back(row, static_cast<int>(L.rho(t, c)), -1.0 / dt);
      for (int k = 0; k < L.d; ++k) {
        const double h = f.dx(k);
        for_faces(f, k, c, [&](std::size_t face, int side) {
          tr.emplace_back(row, static_cast<int>(L.omega(k, t, face)), side > 0 ? 1.0 / h : -1.0 / h);
        });
      }
      tr.emplace_back(row, static_cast<int>(L.zeta(t, c)), -1.0);
    }
  }
  SpMat A(static_cast<int>(static_cast<std::size_t>(L.T) * L.C), static_cast<int>(L.size));
  A.setFromTriplets(tr.begin(), tr.end());
  return A;
}

// Collocation operator V = I U + v0 onto (t + 1/2, cell center) triples.
SpMat collocation_matrix(const SpaceTimeField& f, const Layout& L) {
  Triplets tr;
  const std::size_t s = L.stride();
  for (int t = 0; t < L.T; ++t) {
    for (std::size_t c = 0; c < L.C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(t) * L.C + c) * s;
      if (t > 0) tr.emplace_back(static_cast<int>(base), static_cast<int>(L.rho(t, c)), 0.5);
      if (t + 1 < L.T) tr.emplace_back(static_cast<int>(base), static_cast<int>(L.rho(t + 1, c)), 0.5);
      for (int k = 0; k < L.d; ++k) {
        for_faces(f, k, c, [&](std::size_t face, int) {
          tr.emplace_back(static_cast<int>(base + 1 + k), static_cast<int>(L.omega(k, t, face)), 0.5);
        });
      }
      tr.emplace_back(static_cast<int>(base + s - 1), static_cast<int>(L.zeta(t, c)), 1.0);
    }
  }
  SpMat I(static_cast<int>(L.collocated()), static_cast<int>(L.size));
  I.setFromTriplets(tr.begin(), tr.end());
  return I;
}

void unpack(const Eigen::VectorXd& U, const Layout& L, SpaceTimeField& f) {
  for (int t = 1; t < L.T; ++t) {
    for (std::size_t c = 0; c < L.C; ++c) f.rho(t, c) = U[static_cast<Eigen::Index>(L.rho(t, c))];
  }
  for (int k = 0; k < L.d; ++k) {
    for (int t = 0; t < L.T; ++t) {
      for (std::size_t q = 0; q < L.F[k]; ++q) f.omega(k, t, q) = U[static_cast<Eigen::Index>(L.omega(k, t, q))];
    }
  }
  for (int t = 0; t < L.T; ++t) {
    for (std::size_t c = 0; c < L.C; ++c) f.zeta(t, c) = U[static_cast<Eigen::Index>(L.zeta(t, c))];
  }
}

double collocated_objective(const Eigen::VectorXd& V, const Layout& L, const InfinitesimalCost& cost) {
  const std::size_t s = L.stride();
  double total = 0.0;
  for (std::size_t q = 0; q < static_cast<std::size_t>(L.T) * L.C; ++q) {
    const double* z = V.data() + q * s;
    total += cost.evaluate(z[0], z + 1, L.d, z[s - 1]);
  }
  return total;
}

}  // namespace

double continuity_residual(const SpaceTimeField& field) {
  double s = 0.0;
  for (int t = 0; t < field.time_steps(); ++t) {
    for (std::size_t c = 0; c < field.cell_count(); ++c) {
      const double r = (field.rho(t + 1, c) - field.rho(t, c)) / field.dt() + field.divergence(t, c) - field.zeta(t, c);
      s += r * r;
    }
  }
  return std::sqrt(s);
}

double dynamic_objective(const SpaceTimeField& field, const InfinitesimalCost& cost) {
  double total = 0.0;
  const int d = field.dimension();
  for (int t = 0; t < field.time_steps(); ++t) {
    for (std::size_t c = 0; c < field.cell_count(); ++c) {
      double w[2] = {0.0, 0.0};
      for (int k = 0; k < d; ++k) w[k] = 0.5 * (field.flux_low(k, t, c) + field.flux_high(k, t, c));
      total += cost.evaluate(0.5 * (field.rho(t, c) + field.rho(t + 1, c)), w, d, field.zeta(t, c));
    }
  }
  return total * field.dt() * field.cell_volume();
}

DynamicSolution solve_dynamic(const GridDensity& rho0, const GridDensity& rho1, const InfinitesimalCost& cost,
                              int time_steps, const DynamicConfig& config) {
  if (!(rho0.domain == rho1.domain) || rho0.cells != rho1.cells) {
    throw Error(ErrorCode::kDomainMismatch, "marginal grids differ");
  }
  const int d = rho0.domain.dimension();
  const int N = rho0.cells[0];
  for (int k = 1; k < d; ++k) {
    if (rho0.cells[k] != N) throw Error(ErrorCode::kInvalidArgument, "grid must have the same cell count per axis");
  }
  if (time_steps < 2 || N < 2) throw Error(ErrorCode::kInvalidArgument, "need T >= 2 and N >= 2");

  DynamicSolution out;
  out.field = SpaceTimeField(rho0.domain, time_steps, N);
  SpaceTimeField& field = out.field;
  const double vol = field.cell_volume();
  const Layout L(field);
  for (std::size_t c = 0; c < L.C; ++c) {
    field.rho(0, c) = rho0.values[c] / vol;
    field.rho(L.T, c) = rho1.values[c] / vol;
  }

  const SpMat A = continuity_matrix(field, L);
  const SpMat I = collocation_matrix(field, L);
  const double dt = field.dt();
  const auto nC = static_cast<Eigen::Index>(static_cast<std::size_t>(L.T) * L.C);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(nC);
  Eigen::VectorXd v0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.collocated()));
  for (std::size_t c = 0; c < L.C; ++c) {
    b[static_cast<Eigen::Index>(c)] += field.rho(0, c) / dt;
    b[static_cast<Eigen::Index>(static_cast<std::size_t>(L.T - 1) * L.C + c)] -= field.rho(L.T, c) / dt;
    v0[static_cast<Eigen::Index>(c * L.stride())] += 0.5 * field.rho(0, c);
    v0[static_cast<Eigen::Index>((static_cast<std::size_t>(L.T - 1) * L.C + c) * L.stride())] += 0.5 * field.rho(L.T, c);
  }

  Eigen::SimplicialLDLT<SpMat> ce_solver;
  const SpMat AAt = A * SpMat(A.transpose());
  ce_solver.compute(AAt);
  if (ce_solver.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "continuity system factorization failed");
  SpMat M = SpMat(I.transpose()) * I;
  for (Eigen::Index k = 0; k < M.rows(); ++k) M.coeffRef(k, k) += 1.0;
  Eigen::SimplicialLDLT<SpMat> col_solver;
  col_solver.compute(M);
  if (col_solver.info() != Eigen::Success) throw Error(ErrorCode::kSingularSystem, "collocation system factorization failed");

  auto project_ce = [&](const Eigen::VectorXd& U) -> Eigen::VectorXd {
    const Eigen::VectorXd lambda = ce_solver.solve(A * U - b);
    return U - A.transpose() * lambda;
  };
  // Projection onto {V = I U + v0}.
  auto project_graph = [&](const Eigen::VectorXd& U, const Eigen::VectorXd& V, Eigen::VectorXd& Uo,
                           Eigen::VectorXd& Vo) {
    Uo = col_solver.solve(U + I.transpose() * (V - v0));
    Vo = I * Uo + v0;
  };

  const double gamma = config.gamma > 0.0 ? config.gamma : 1.0;
  const std::size_t s = L.stride();

  // Start from the linear interpolation of the marginals with a pure source.
  Eigen::VectorXd zU = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L.size));
  for (int t = 1; t < L.T; ++t) {
    const double w = static_cast<double>(t) / L.T;
    for (std::size_t c = 0; c < L.C; ++c) {
      zU[static_cast<Eigen::Index>(L.rho(t, c))] = (1.0 - w) * field.rho(0, c) + w * field.rho(L.T, c);
    }
  }
  for (int t = 0; t < L.T; ++t) {
    for (std::size_t c = 0; c < L.C; ++c) {
      zU[static_cast<Eigen::Index>(L.zeta(t, c))] = field.rho(L.T, c) - field.rho(0, c);
    }
  }
  Eigen::VectorXd zV = I * zU + v0;
  Eigen::VectorXd xU, xV, yU, yV;

  // Objective drift is measured relative to max(|value|, 1e-6 * mass), so that
  // near-zero costs (equal marginals) can still settle.
  double mass_scale = 0.0;
  for (std::size_t c = 0; c < L.C; ++c) mass_scale += field.rho(0, c) + field.rho(L.T, c);
  mass_scale *= 0.5 * L.T;
  double prev_value = std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= config.max_iterations; ++it) {
    project_graph(zU, zV, xU, xV);
    yU = project_ce(2.0 * xU - zU);
    yV = 2.0 * xV - zV;
    for (std::size_t q = 0; q < static_cast<std::size_t>(L.T) * L.C; ++q) {
      double* z = yV.data() + q * s;
      cost.prox(gamma, z[0], z + 1, L.d, z[s - 1]);
    }
    zU += yU - xU;
    zV += yV - xV;
    if (it % std::max(1, config.check_every) == 0) {
      // Stop when the two splitting blocks agree and the objective has settled.
      const double split = std::sqrt((xU - yU).squaredNorm() + (xV - yV).squaredNorm()) /
                           std::max(std::sqrt(yU.squaredNorm() + yV.squaredNorm()), 1e-300);
      const double value = collocated_objective(yV, L, cost);
      const double drift = std::abs(value - prev_value) / std::max({std::abs(value), 1e-6 * mass_scale, 1e-300});
      prev_value = value;
      if (split <= config.tolerance && drift <= config.tolerance) {
        out.status = SolveStatus::kConverged;
        break;
      }
    }
  }
  out.iterations = std::min(it, config.max_iterations);

  unpack(yU, L, field);
  out.residual = continuity_residual(field);
  const Eigen::VectorXd IyU = I * yU + v0;
  out.collocation_gap = (yV - IyU).norm() / std::max(yV.norm(), 1e-300);
  out.value = collocated_objective(yV, L, cost) * dt * vol;

  // Multipliers of the continuity rows give the potential at (t + 1/2, cell).
  const Eigen::VectorXd g = (xU - zU) / gamma;
  const Eigen::VectorXd lambda = ce_solver.solve(A * g);
  out.potential.assign(static_cast<std::size_t>(L.T + 1) * L.C, 0.0);
  auto mid = [&](int t, std::size_t c) { return lambda[static_cast<Eigen::Index>(static_cast<std::size_t>(t) * L.C + c)]; };
  for (std::size_t c = 0; c < L.C; ++c) {
    out.potential[c] = 1.5 * mid(0, c) - 0.5 * mid(1, c);
    for (int t = 1; t < L.T; ++t) out.potential[static_cast<std::size_t>(t) * L.C + c] = 0.5 * (mid(t - 1, c) + mid(t, c));
    out.potential[static_cast<std::size_t>(L.T) * L.C + c] = 1.5 * mid(L.T - 1, c) - 0.5 * mid(L.T - 2, c);
  }
  double dual = 0.0;
  for (std::size_t c = 0; c < L.C; ++c) {
    dual += out.potential[static_cast<std::size_t>(L.T) * L.C + c] * field.rho(L.T, c) - out.potential[c] * field.rho(0, c);
  }
  out.dual_value = dual * vol;
  return out;
}

DynamicSolution solve_dynamic(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                              const InfinitesimalCost& cost, int time_steps, int cells_per_axis,
                              const DynamicConfig& config) {
  if (!(rho0.domain() == rho1.domain())) throw Error(ErrorCode::kDomainMismatch, "marginals live on different domains");
  const std::vector<int> cells(rho0.dimension(), cells_per_axis);
  return solve_dynamic(rasterize(rho0, cells), rasterize(rho1, cells), cost, time_steps, config);
}

DualResidual dynamic_dual_residual(const SpaceTimeField& field, const std::vector<double>& phi,
                                   const InfinitesimalCost& cost) {
  const int T = field.time_steps();
  const std::size_t C = field.cell_count();
  if (phi.size() != static_cast<std::size_t>(T + 1) * C) {
    throw Error(ErrorCode::kLengthMismatch, "potential must have (T + 1) x cells entries");
  }
  const int d = field.dimension();
  const int N = field.cells_per_axis();
  auto at = [&](int t, std::size_t c) { return phi[static_cast<std::size_t>(t) * C + c]; };
  // Centered gradient inside, one-sided at the boundary.
  auto gradient = [&](int t, std::size_t c, int k) {
    const auto ij = field.cell_coords(c);
    const std::size_t step = k == 0 ? 1 : static_cast<std::size_t>(N);
    const bool lo = ij[k] > 0;
    const bool hi = ij[k] < N - 1;
    const double up = hi ? at(t, c + step) : at(t, c);
    const double down = lo ? at(t, c - step) : at(t, c);
    const double span = (lo && hi ? 2.0 : 1.0) * field.dx(k);
    return (up - down) / span;
  };
  DualResidual out;
  double worst = 0.0;
  for (int t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      double g[2] = {0.0, 0.0};
      for (int k = 0; k < d; ++k) g[k] = 0.5 * (gradient(t, c, k) + gradient(t + 1, c, k));
      const double v = cost.dual_violation((at(t + 1, c) - at(t, c)) / field.dt(), g, d, 0.5 * (at(t, c) + at(t + 1, c)));
      worst = std::max(worst, v);
    }
  }
  out.violation = worst;
  double obj = 0.0;
  for (std::size_t c = 0; c < C; ++c) obj += at(T, c) * field.rho(T, c) - at(0, c) * field.rho(0, c);
  out.objective = obj * field.cell_volume();
  return out;
}

void FlowField::sample(double t, const Point& x, double* v, double& alpha) const {
  const int d = domain.dimension();
  const int N = cells_per_axis;
  const std::size_t C = velocity.size() / std::max<std::size_t>(1, static_cast<std::size_t>(time_steps) * d);
  const double s = std::clamp(t * time_steps - 0.5, 0.0, static_cast<double>(time_steps - 1));
  const int k0 = static_cast<int>(std::floor(s));
  const int k1 = std::min(k0 + 1, time_steps - 1);
  const double wt = s - k0;
  int i0[2] = {0, 0}, i1[2] = {0, 0};
  double w[2] = {0.0, 0.0};
  for (int k = 0; k < d; ++k) {
    const double u = std::clamp((x[k] - domain.lower()[k]) / (domain.extent(k) / N) - 0.5, 0.0, static_cast<double>(N - 1));
    i0[k] = static_cast<int>(std::floor(u));
    i1[k] = std::min(i0[k] + 1, N - 1);
    w[k] = u - i0[k];
  }
  for (int k = 0; k < d; ++k) v[k] = 0.0;
  alpha = 0.0;
  const int corners = d == 1 ? 2 : 4;
  for (int corner = 0; corner < corners; ++corner) {
    const int b0 = corner & 1;
    const int b1 = (corner >> 1) & 1;
    const int cx = b0 ? i1[0] : i0[0];
    const int cy = d == 2 ? (b1 ? i1[1] : i0[1]) : 0;
    double weight = b0 ? w[0] : 1.0 - w[0];
    if (d == 2) weight *= b1 ? w[1] : 1.0 - w[1];
    const std::size_t c = static_cast<std::size_t>(cx) + static_cast<std::size_t>(N) * cy;
    for (int layer = 0; layer < 2; ++layer) {
      const int kt = layer ? k1 : k0;
      const double wl = weight * (layer ? wt : 1.0 - wt);
      if (wl == 0.0) continue;
      const std::size_t q = static_cast<std::size_t>(kt) * C + c;
      for (int k = 0; k < d; ++k) v[k] += wl * velocity[q * d + k];
      alpha += wl * growth[q];
    }
  }
}

FlowField flow_from_field(const SpaceTimeField& field, double floor) {
  FlowField flow;
  flow.domain = field.domain();
  flow.time_steps = field.time_steps();
  flow.cells_per_axis = field.cells_per_axis();
  const int d = field.dimension();
  const std::size_t C = field.cell_count();
  const int T = field.time_steps();
  flow.velocity.assign(static_cast<std::size_t>(T) * C * d, 0.0);
  flow.growth.assign(static_cast<std::size_t>(T) * C, 0.0);
  double mean = 0.0;
  for (double r : field.rho_data()) mean += std::max(r, 0.0);
  mean /= static_cast<double>(field.rho_data().size());
  const double cut = floor * mean;
  for (int t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double r = 0.5 * (field.rho(t, c) + field.rho(t + 1, c));
      if (!(r > cut) || r <= 0.0) continue;
      const std::size_t q = static_cast<std::size_t>(t) * C + c;
      for (int k = 0; k < d; ++k) flow.velocity[q * d + k] = 0.5 * (field.flux_low(k, t, c) + field.flux_high(k, t, c)) / r;
      flow.growth[q] = field.zeta(t, c) / r;
    }
  }
  return flow;
}

std::vector<FlowState> integrate_flow(const FlowField& flow, FlowState particles, int steps) {
  if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "steps must be positive");
  if (particles.positions.size() != particles.masses.size()) {
    throw Error(ErrorCode::kLengthMismatch, "positions and masses differ in length");
  }
  const int d = flow.domain.dimension();
  auto clamp = [&](Point& x) {
    for (int k = 0; k < d; ++k) x[k] = std::clamp(x[k], flow.domain.lower()[k], flow.domain.upper()[k]);
  };
  std::vector<FlowState> path;
  path.reserve(static_cast<std::size_t>(steps) + 1);
  path.push_back(particles);
  const double h = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    for (std::size_t p = 0; p < particles.positions.size(); ++p) {
      Point& x = particles.positions[p];
      double v[2];
      double alpha = 0.0;
      flow.sample(t, x, v, alpha);
      Point mid = x;
      for (int a = 0; a < d; ++a) mid[a] += 0.5 * h * v[a];
      clamp(mid);
      flow.sample(t + 0.5 * h, mid, v, alpha);
      for (int a = 0; a < d; ++a) x[a] += h * v[a];
      clamp(x);
      particles.masses[p] *= std::exp(alpha * h);
    }
    particles.step = k + 1;
    path.push_back(particles);
  }
  return path;
}

nlohmann::json field_to_json(const SpaceTimeField& field) {
  nlohmann::json j;
  j["T"] = field.time_steps();
  j["N"] = std::vector<int>(field.dimension(), field.cells_per_axis());
  j["domain"] = {{"lower", field.domain().lower()}, {"upper", field.domain().upper()}};
  j["rho"] = field.rho_data();
  nlohmann::json omega = nlohmann::json::array();
  for (int k = 0; k < field.dimension(); ++k) omega.push_back(field.omega_data(k));
  j["omega"] = omega;
  j["zeta"] = field.zeta_data();
  return j;
}

std::string layer_to_csv(const SpaceTimeField& field, int t) {
  std::string out = field.dimension() == 1 ? "x1,density\n" : "x1,x2,density\n";
  for (std::size_t c = 0; c < field.cell_count(); ++c) {
    const Point p = field.cell_center(c);
    for (double x : p) out += fmt::format("{:.17g},", x);
    out += fmt::format("{:.17g}\n", field.rho(t, c));
  }
  return out;
}

DynamicConfig dynamic_config_from_json(const nlohmann::json& j) {
  DynamicConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "dynamic settings must be an object");
  if (j.contains("max_iterations")) cfg.max_iterations = j.at("max_iterations").get<int>();
  if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
  if (j.contains("tolerance")) cfg.tolerance = j.at("tolerance").get<double>();
  if (j.contains("check_every")) cfg.check_every = j.at("check_every").get<int>();
  return cfg;
}

}  // namespace uot
