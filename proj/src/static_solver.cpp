#include "uot/static_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "uot/linear_program.hpp"

namespace uot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Placeholder for an empty marginal: one zero-mass atom at the other side's
// first point. Costs with a zero-mass endpoint do not depend on its location.
DiscreteMeasure with_apex(const DiscreteMeasure& rho, const DiscreteMeasure& other) {
  Point where = other.empty() ? other.domain().lower() : other.point(0);
  return DiscreteMeasure({where}, {0.0}, rho.domain());
}

// Normalized problem data shared by the solvers.
struct Problem {
  const CostFunction* cost = nullptr;
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> a;     // source masses / scale
  std::vector<double> b;     // target masses / scale
  std::vector<double> dist;  // n x m
  double mass_scale = 1.0;

  double d(std::size_t i, std::size_t j) const { return dist[i * m + j]; }
  double total() const {
    return std::accumulate(a.begin(), a.end(), 0.0) + std::accumulate(b.begin(), b.end(), 0.0);
  }
};

Problem make_problem(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1, const CostFunction& cost) {
  Problem pb;
  pb.cost = &cost;
  pb.n = rho0.size();
  pb.m = rho1.size();
  pb.mass_scale = std::max({rho0.total_mass(), rho1.total_mass(), std::numeric_limits<double>::min()});
  pb.a.resize(pb.n);
  pb.b.resize(pb.m);
  for (std::size_t i = 0; i < pb.n; ++i) pb.a[i] = rho0.mass(i) / pb.mass_scale;
  for (std::size_t j = 0; j < pb.m; ++j) pb.b[j] = rho1.mass(j) / pb.mass_scale;
  pb.dist.resize(pb.n * pb.m);
  for (std::size_t i = 0; i < pb.n; ++i) {
    for (std::size_t j = 0; j < pb.m; ++j) pb.dist[i * pb.m + j] = distance(rho0.point(i), rho1.point(j));
  }
  return pb;
}

double upper_dual_bound(const CostFunction& cost) {
  switch (cost.kind()) {
    case CostKind::kWF: return 1.0;
    case CostKind::kPartial: return cost.delta();
    case CostKind::kClassical: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

double gap_floor(const Problem& pb) {
  const double unit = pb.cost->kind() == CostKind::kPartial ? pb.cost->delta() : 1.0;
  return 1e-12 * unit * std::max(pb.total(), 1e-300);
}

// Normalized objective of a plan: sum of c / dual_scale.
double plan_value(const Problem& pb, const std::vector<double>& u, const std::vector<double>& v) {
  const double inv = 1.0 / pb.cost->dual_scale();
  double s = 0.0;
  for (std::size_t p = 0; p < u.size(); ++p) s += pb.cost->evaluate_at_distance(pb.dist[p], u[p], v[p]);
  return s * inv;
}

// Rescales rows of u and columns of v onto the exact marginals.
void repair_primal(const Problem& pb, std::vector<double>& u, std::vector<double>& v) {
  for (std::size_t i = 0; i < pb.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < pb.m; ++j) {
      double& x = u[i * pb.m + j];
      x = std::max(x, 0.0);
      row += x;
    }
    if (row > 0.0) {
      const double f = pb.a[i] / row;
      for (std::size_t j = 0; j < pb.m; ++j) u[i * pb.m + j] *= f;
    } else if (pb.m > 0) {
      std::size_t j0 = 0;
      for (std::size_t j = 1; j < pb.m; ++j) {
        if (pb.d(i, j) < pb.d(i, j0)) j0 = j;
      }
      u[i * pb.m + j0] = pb.a[i];
    }
  }
  for (std::size_t j = 0; j < pb.m; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < pb.n; ++i) {
      double& x = v[i * pb.m + j];
      x = std::max(x, 0.0);
      col += x;
    }
    if (col > 0.0) {
      const double f = pb.b[j] / col;
      for (std::size_t i = 0; i < pb.n; ++i) v[i * pb.m + j] *= f;
    } else if (pb.n > 0) {
      std::size_t i0 = 0;
      for (std::size_t i = 1; i < pb.n; ++i) {
        if (pb.d(i, j) < pb.d(i0, j)) i0 = i;
      }
      v[i0 * pb.m + j] = pb.b[j];
    }
  }
}

// phi_i <- min_j h(d_ij, psi_j) (rows) or psi_j <- min_i h(d_ij, phi_i) (columns).
void c_transform(const Problem& pb, const std::vector<double>& from, std::vector<double>& to, bool rows,
                 double cap) {
  const std::size_t count = rows ? pb.n : pb.m;
  const std::size_t other = rows ? pb.m : pb.n;
  for (std::size_t k = 0; k < count; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < other; ++l) {
      const double d = rows ? pb.d(k, l) : pb.d(l, k);
      best = std::min(best, pb.cost->max_partner(d, from[l]));
    }
    to[k] = std::min(best, cap);
  }
}

double dual_objective(const Problem& pb, const std::vector<double>& phi, const std::vector<double>& psi) {
  double value = 0.0;
  for (std::size_t i = 0; i < pb.n; ++i) {
    if (pb.a[i] > 0.0) value += pb.a[i] * phi[i];
  }
  for (std::size_t j = 0; j < pb.m; ++j) {
    if (pb.b[j] > 0.0) value += pb.b[j] * psi[j];
  }
  return std::isnan(value) ? kNegInf : value;
}

// Double c-transform started from either side; keeps the better pair. Both
// potentials end exactly feasible: (phi_i, psi_j) is in Q for every (i, j).
double polish_dual(const Problem& pb, std::vector<double>& phi, std::vector<double>& psi) {
  const double cap = upper_dual_bound(*pb.cost);
  // Strictly below the WF bound so that every transform stays finite.
  const double cap_strict = pb.cost->kind() == CostKind::kWF ? 1.0 - 1e-12 : cap;
  std::vector<double> phi_a = phi, psi_a = psi, phi_b = phi, psi_b = psi;
  for (double& s : psi_a) s = std::min(s, cap_strict);
  c_transform(pb, psi_a, phi_a, true, cap_strict);
  c_transform(pb, phi_a, psi_a, false, cap);
  for (double& s : phi_b) s = std::min(s, cap_strict);
  c_transform(pb, phi_b, psi_b, false, cap_strict);
  c_transform(pb, psi_b, phi_b, true, cap);
  const double va = dual_objective(pb, phi_a, psi_a);
  const double vb = dual_objective(pb, phi_b, psi_b);
  if (va >= vb) {
    phi.swap(phi_a);
    psi.swap(psi_a);
    return va;
  }
  phi.swap(phi_b);
  psi.swap(psi_b);
  return vb;
}

struct Certificate {
  std::vector<double> u, v, phi, psi;
  double primal = 0.0;
  double dual = kNegInf;
  double floor = 0.0;

  double gap() const { return primal - dual; }
  double relative_gap() const {
    return gap() / std::max({std::abs(primal), std::abs(dual), floor});
  }
};

// WF potentials read off a plan: on a pair with positive masses the optimal
// (phi_i, psi_j) is the gradient of the normalized cost in (m0, m1). Rows and
// columns average the gradients of their pairs, weighted by mass.
void potentials_from_plan(const Problem& pb, const std::vector<double>& u, const std::vector<double>& v,
                          std::vector<double>& phi, std::vector<double>& psi) {
  const double delta = pb.cost->delta();
  std::vector<double> wr(pb.n, 0.0), wc(pb.m, 0.0);
  phi.assign(pb.n, 0.0);
  psi.assign(pb.m, 0.0);
  for (std::size_t i = 0; i < pb.n; ++i) {
    for (std::size_t j = 0; j < pb.m; ++j) {
      const std::size_t p = i * pb.m + j;
      const double k = truncated_cos(pb.dist[p] / (2.0 * delta));
      if (u[p] > 0.0) {
        phi[i] += u[p] * (1.0 - k * std::sqrt(v[p] / u[p]));
        wr[i] += u[p];
      }
      if (v[p] > 0.0) {
        psi[j] += v[p] * (1.0 - k * std::sqrt(u[p] / v[p]));
        wc[j] += v[p];
      }
    }
  }
  for (std::size_t i = 0; i < pb.n; ++i) phi[i] = wr[i] > 0.0 ? phi[i] / wr[i] : 0.0;
  for (std::size_t j = 0; j < pb.m; ++j) psi[j] = wc[j] > 0.0 ? psi[j] / wc[j] : 0.0;
}

Certificate certify(const Problem& pb, std::vector<double> u, std::vector<double> v,
                    std::vector<double> phi, std::vector<double> psi) {
  Certificate c;
  repair_primal(pb, u, v);
  c.primal = plan_value(pb, u, v);
  c.dual = polish_dual(pb, phi, psi);
  if (pb.cost->kind() == CostKind::kWF) {
    std::vector<double> phi_p, psi_p;
    potentials_from_plan(pb, u, v, phi_p, psi_p);
    const double alt = polish_dual(pb, phi_p, psi_p);
    if (alt > c.dual) {
      c.dual = alt;
      phi.swap(phi_p);
      psi.swap(psi_p);
    }
  }
  c.floor = gap_floor(pb);
  c.u = std::move(u);
  c.v = std::move(v);
  c.phi = std::move(phi);
  c.psi = std::move(psi);
  return c;
}

struct RawResult {
  Certificate cert;
  int iterations = 0;
  bool converged = false;
};

RawResult solve_pdhg(const Problem& pb, const SolverConfig& config) {
  const std::size_t n = pb.n;
  const std::size_t m = pb.m;
  const std::size_t P = n * m;
  const CostFunction& cost = *pb.cost;

  std::vector<double> u(P, 0.0), v(P, 0.0);
  std::vector<double> yr(n, 0.0), yc(m, 0.0);
  // Product plan as a starting point.
  const double ta = std::accumulate(pb.a.begin(), pb.a.end(), 0.0);
  const double tb = std::accumulate(pb.b.begin(), pb.b.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      u[i * m + j] = pb.a[i] * (tb > 0.0 ? pb.b[j] / tb : 1.0 / m);
      v[i * m + j] = pb.b[j] * (ta > 0.0 ? pb.a[i] / ta : 1.0 / n);
    }
  }

  const bool uniform = config.primal_step > 0.0 && config.dual_step > 0.0;
  if (uniform) {
    const double norm = marginal_operator_norm(n, m);
    if (config.primal_step * config.dual_step * norm * norm > 1.0 + 1e-12) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("step sizes violate tau*sigma*||K||^2 <= 1 (||K|| = {})", norm));
    }
  }
  double omega = 1.0;
  auto tau = [&]() { return uniform ? config.primal_step : 1.0 / omega; };
  auto sigma_row = [&]() { return uniform ? config.dual_step : omega / static_cast<double>(m); };
  auto sigma_col = [&]() { return uniform ? config.dual_step : omega / static_cast<double>(n); };

  std::vector<double> su(P, 0.0), sv(P, 0.0), syr(n, 0.0), syc(m, 0.0);
  int avg_count = 0;
  std::vector<double> ru = u, rv = v, ryr = yr, ryc = yc;  // last restart point

  auto negated = [](const std::vector<double>& y) {
    std::vector<double> out(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) out[k] = -y[k];
    return out;
  };

  RawResult best;
  best.cert = certify(pb, u, v, negated(yr), negated(yc));
  double restart_merit = best.cert.gap();
  double prev_merit = restart_merit;
  int since_restart = 0;

  std::vector<double> nu(P), nv(P);
  const int check = std::max(1, config.check_every);
  for (int it = 1; it <= config.max_iterations; ++it) {
    const double t = tau();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t p = i * m + j;
        const double wu = u[p] - t * yr[i];
        const double wv = v[p] - t * yc[j];
        const DualSetPoint q = cost.project_dual_set(pb.dist[p], wu / t, wv / t);
        nu[p] = std::max(0.0, wu - t * q.a);
        nv[p] = std::max(0.0, wv - t * q.b);
      }
    }
    const double sr = sigma_row();
    const double sc = sigma_col();
    for (std::size_t i = 0; i < n; ++i) {
      double r = -pb.a[i];
      for (std::size_t j = 0; j < m; ++j) r += 2.0 * nu[i * m + j] - u[i * m + j];
      yr[i] += sr * r;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double r = -pb.b[j];
      for (std::size_t i = 0; i < n; ++i) r += 2.0 * nv[i * m + j] - v[i * m + j];
      yc[j] += sc * r;
    }
    u.swap(nu);
    v.swap(nv);
    for (std::size_t p = 0; p < P; ++p) {
      su[p] += u[p];
      sv[p] += v[p];
    }
    for (std::size_t i = 0; i < n; ++i) syr[i] += yr[i];
    for (std::size_t j = 0; j < m; ++j) syc[j] += yc[j];
    ++avg_count;
    ++since_restart;

    if (it % check != 0 && it != config.max_iterations) continue;

    Certificate cur = certify(pb, u, v, negated(yr), negated(yc));
    const double inv = 1.0 / avg_count;
    std::vector<double> au(P), av(P), ayr(n), ayc(m);
    for (std::size_t p = 0; p < P; ++p) {
      au[p] = su[p] * inv;
      av[p] = sv[p] * inv;
    }
    for (std::size_t i = 0; i < n; ++i) ayr[i] = syr[i] * inv;
    for (std::size_t j = 0; j < m; ++j) ayc[j] = syc[j] * inv;
    Certificate avg = certify(pb, au, av, negated(ayr), negated(ayc));
    // The certificates are independent bounds; mix the best primal and dual.
    for (const Certificate* c : {&cur, &avg}) {
      Certificate mixed = best.cert;
      bool improved = false;
      if (c->primal < mixed.primal) {
        mixed.primal = c->primal;
        mixed.u = c->u;
        mixed.v = c->v;
        improved = true;
      }
      if (c->dual > mixed.dual) {
        mixed.dual = c->dual;
        mixed.phi = c->phi;
        mixed.psi = c->psi;
        improved = true;
      }
      if (improved) best.cert = std::move(mixed);
    }
    best.iterations = it;
    if (best.cert.relative_gap() <= config.tolerance) {
      best.converged = true;
      return best;
    }

    if (!config.adaptive_restart) continue;
    const bool use_avg = avg.gap() < cur.gap();
    const double merit = use_avg ? avg.gap() : cur.gap();
    const bool sufficient = merit <= 0.2 * restart_merit;
    const bool stalled = merit <= 0.8 * restart_merit && merit > prev_merit;
    const bool long_run = since_restart >= 500 && since_restart >= it / 3;
    prev_merit = merit;
    if (!(sufficient || stalled || long_run)) continue;

    if (use_avg) {
      u = au;
      v = av;
      yr = ayr;
      yc = ayc;
    }
    if (!uniform) {
      double dx = 0.0, dy = 0.0;
      for (std::size_t p = 0; p < P; ++p) dx += (u[p] - ru[p]) * (u[p] - ru[p]) + (v[p] - rv[p]) * (v[p] - rv[p]);
      for (std::size_t i = 0; i < n; ++i) dy += (yr[i] - ryr[i]) * (yr[i] - ryr[i]);
      for (std::size_t j = 0; j < m; ++j) dy += (yc[j] - ryc[j]) * (yc[j] - ryc[j]);
      if (dx > 1e-20 && dy > 1e-20) {
        omega = std::exp(0.5 * std::log(std::sqrt(dy / dx)) + 0.5 * std::log(omega));
        omega = std::clamp(omega, 1e-4, 1e4);
      }
    }
    ru = u;
    rv = v;
    ryr = yr;
    ryc = yc;
    std::fill(su.begin(), su.end(), 0.0);
    std::fill(sv.begin(), sv.end(), 0.0);
    std::fill(syr.begin(), syr.end(), 0.0);
    std::fill(syc.begin(), syc.end(), 0.0);
    avg_count = 0;
    since_restart = 0;
    restart_merit = merit;
    prev_merit = merit;
  }
  return best;
}

RawResult solve_linear_program(const Problem& pb) {
  const std::size_t n = pb.n;
  const std::size_t m = pb.m;
  const std::size_t P = n * m;
  const CostFunction& cost = *pb.cost;
  LinearProgram lp;
  std::vector<double> u(P, 0.0), v(P, 0.0);
  std::vector<double> phi(n, 0.0), psi(m, 0.0);

  if (cost.kind() == CostKind::kClassical) {
    // Single coupling g with gamma0 = gamma1 = g.
    lp.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + m), static_cast<Eigen::Index>(P));
    lp.b.resize(static_cast<Eigen::Index>(n + m));
    lp.c.resize(static_cast<Eigen::Index>(P));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const auto p = static_cast<Eigen::Index>(i * m + j);
        lp.A(static_cast<Eigen::Index>(i), p) = 1.0;
        lp.A(static_cast<Eigen::Index>(n + j), p) = 1.0;
        lp.c[p] = std::pow(pb.d(i, j), cost.p()) / cost.p();
      }
    }
    for (std::size_t i = 0; i < n; ++i) lp.b[static_cast<Eigen::Index>(i)] = pb.a[i];
    for (std::size_t j = 0; j < m; ++j) lp.b[static_cast<Eigen::Index>(n + j)] = pb.b[j];
    lp.senses.assign(n + m, RowSense::kEqual);
    const LpSolution sol = solve_lp(lp);
    if (sol.status == LpStatus::kInfeasible) {
      throw Error(ErrorCode::kInfeasible, "classical transport needs equal total masses");
    }
    if (sol.status != LpStatus::kOptimal) throw Error(ErrorCode::kNoConvergence, fmt::format("simplex: {}", to_string(sol.status)));
    for (std::size_t p = 0; p < P; ++p) u[p] = v[p] = std::max(0.0, sol.x[static_cast<Eigen::Index>(p)]);
    for (std::size_t i = 0; i < n; ++i) phi[i] = sol.duals[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < m; ++j) psi[j] = sol.duals[static_cast<Eigen::Index>(n + j)];
    RawResult r;
    r.cert.u = u;
    r.cert.v = v;
    r.cert.primal = 0.0;
    for (std::size_t p = 0; p < P; ++p) r.cert.primal += lp.c[static_cast<Eigen::Index>(p)] * u[p];
    r.cert.dual = polish_dual(pb, phi, psi);
    r.cert.phi = phi;
    r.cert.psi = psi;
    r.cert.floor = 1e-12 * std::max(pb.total(), 1e-300);
    r.converged = true;
    r.iterations = sol.pivots;
    return r;
  }

  // Partial: c = max((k - delta) m0 + delta m1, delta m0 + (k - delta) m1)
  // with k = min(|x - y|^p / p, 2 delta), modeled through an epigraph variable s.
  const double delta = cost.delta();
  const auto rows = static_cast<Eigen::Index>(n + m + 2 * P);
  const auto cols = static_cast<Eigen::Index>(3 * P);
  lp.A = Eigen::MatrixXd::Zero(rows, cols);
  lp.b = Eigen::VectorXd::Zero(rows);
  lp.c = Eigen::VectorXd::Zero(cols);
  lp.senses.assign(static_cast<std::size_t>(rows), RowSense::kGreaterEqual);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto p = static_cast<Eigen::Index>(i * m + j);
      const Eigen::Index iu = p;
      const Eigen::Index iv = static_cast<Eigen::Index>(P) + p;
      const Eigen::Index is = 2 * static_cast<Eigen::Index>(P) + p;
      const double k = std::min(std::pow(pb.d(i, j), cost.p()) / cost.p(), 2.0 * delta);
      lp.A(static_cast<Eigen::Index>(i), iu) = 1.0;
      lp.A(static_cast<Eigen::Index>(n + j), iv) = 1.0;
      const Eigen::Index r1 = static_cast<Eigen::Index>(n + m) + 2 * p;
      lp.A(r1, is) = 1.0;
      lp.A(r1, iu) = -(k - delta);
      lp.A(r1, iv) = -delta;
      lp.A(r1 + 1, is) = 1.0;
      lp.A(r1 + 1, iu) = -delta;
      lp.A(r1 + 1, iv) = -(k - delta);
      lp.c[is] = 1.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    lp.b[static_cast<Eigen::Index>(i)] = pb.a[i];
    lp.senses[i] = RowSense::kEqual;
  }
  for (std::size_t j = 0; j < m; ++j) {
    lp.b[static_cast<Eigen::Index>(n + j)] = pb.b[j];
    lp.senses[n + j] = RowSense::kEqual;
  }
  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::kOptimal) throw Error(ErrorCode::kNoConvergence, fmt::format("simplex: {}", to_string(sol.status)));
  for (std::size_t p = 0; p < P; ++p) {
    u[p] = std::max(0.0, sol.x[static_cast<Eigen::Index>(p)]);
    v[p] = std::max(0.0, sol.x[static_cast<Eigen::Index>(P + p)]);
  }
  for (std::size_t i = 0; i < n; ++i) phi[i] = sol.duals[static_cast<Eigen::Index>(i)];
  for (std::size_t j = 0; j < m; ++j) psi[j] = sol.duals[static_cast<Eigen::Index>(n + j)];
  RawResult r;
  r.cert = certify(pb, u, v, phi, psi);
  r.converged = true;
  r.iterations = sol.pivots;
  return r;
}

}  // namespace

SemiCouplingPlan::SemiCouplingPlan(std::vector<Point> src, std::vector<Point> dst)
    : sources(std::move(src)), targets(std::move(dst)) {
  m0.assign(rows() * cols(), 0.0);
  m1.assign(rows() * cols(), 0.0);
}

double SemiCouplingPlan::mass0() const { return std::accumulate(m0.begin(), m0.end(), 0.0); }
double SemiCouplingPlan::mass1() const { return std::accumulate(m1.begin(), m1.end(), 0.0); }

std::vector<double> SemiCouplingPlan::first_marginal() const {
  std::vector<double> out(rows(), 0.0);
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) out[i] += gamma0(i, j);
  }
  return out;
}

std::vector<double> SemiCouplingPlan::second_marginal() const {
  std::vector<double> out(cols(), 0.0);
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) out[j] += gamma1(i, j);
  }
  return out;
}

double SemiCouplingPlan::objective(const CostFunction& cost) const {
  double s = 0.0;
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) s += cost.evaluate(sources[i], gamma0(i, j), targets[j], gamma1(i, j));
  }
  return s;
}

double DualCertificate::relative_gap() const {
  const double denom = std::max(std::abs(primal), std::abs(dual));
  if (denom == 0.0) return gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return gap / denom;
}

double marginal_operator_norm(std::size_t n, std::size_t m, int iterations) {
  if (n == 0 || m == 0) return 0.0;
  // x -> K x (row sums of u, column sums of v) and K^T.
  std::vector<double> u(n * m), v(n * m);
  for (std::size_t p = 0; p < n * m; ++p) {
    u[p] = 1.0 + 0.37 * static_cast<double>(p % 7);
    v[p] = 1.0 + 0.21 * static_cast<double>(p % 5);
  }
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    std::vector<double> r(n, 0.0), c(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        r[i] += u[i * m + j];
        c[j] += v[i * m + j];
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        u[i * m + j] = r[i];
        v[i * m + j] = c[j];
        norm += r[i] * r[i] + c[j] * c[j];
      }
    }
    norm = std::sqrt(norm);
    lambda = norm;
    for (std::size_t p = 0; p < n * m; ++p) {
      u[p] /= norm;
      v[p] /= norm;
    }
  }
  return std::sqrt(lambda);
}

StaticSolution solve_static(const DiscreteMeasure& rho0_in, const DiscreteMeasure& rho1_in,
                            const CostFunction& cost, const SolverConfig& config) {
  if (!(rho0_in.domain() == rho1_in.domain())) {
    throw Error(ErrorCode::kDomainMismatch, "marginals live on different domains");
  }
  StaticSolution out;
  const DiscreteMeasure rho0 = rho0_in.empty() ? with_apex(rho0_in, rho1_in) : rho0_in;
  const DiscreteMeasure rho1 = rho1_in.empty() ? with_apex(rho1_in, rho0) : rho1_in;
  out.virtual_apex = rho0_in.empty() || rho1_in.empty();
  out.plan = SemiCouplingPlan(rho0.points(), rho1.points());

  const double total0 = rho0.total_mass();
  const double total1 = rho1.total_mass();
  if (total0 == 0.0 && total1 == 0.0) {
    out.certificate.phi.assign(rho0.size(), 0.0);
    out.certificate.psi.assign(rho1.size(), 0.0);
    out.status = SolveStatus::kConverged;
    return out;
  }

  const Problem pb = make_problem(rho0, rho1, cost);
  const bool use_lp = cost.kind() == CostKind::kClassical ||
                      (config.method == StaticMethod::kLinearProgram) ||
                      (config.method == StaticMethod::kAuto && cost.kind() == CostKind::kPartial);
  if (cost.kind() == CostKind::kClassical && std::abs(total0 - total1) > 1e-12 * std::max(total0, total1)) {
    throw Error(ErrorCode::kInfeasible, "classical transport needs equal total masses");
  }
  if (use_lp && cost.kind() == CostKind::kWF) {
    throw Error(ErrorCode::kInvalidArgument, "the WF cost is not piecewise linear; use the primal-dual method");
  }
  RawResult raw = use_lp ? solve_linear_program(pb) : solve_pdhg(pb, config);

  const double scale = pb.mass_scale * cost.dual_scale();
  for (std::size_t p = 0; p < raw.cert.u.size(); ++p) {
    out.plan.m0[p] = raw.cert.u[p] * pb.mass_scale;
    out.plan.m1[p] = raw.cert.v[p] * pb.mass_scale;
  }
  out.certificate.phi = raw.cert.phi;
  out.certificate.psi = raw.cert.psi;
  out.certificate.primal = out.plan.objective(cost);
  out.certificate.dual = raw.cert.dual * scale;
  out.certificate.gap = out.certificate.primal - out.certificate.dual;
  out.iterations = raw.iterations;
  const double floor = raw.cert.floor * scale;
  const bool tiny = out.certificate.gap <= floor;
  out.status = (raw.converged || tiny || out.certificate.relative_gap() <= config.tolerance)
                   ? SolveStatus::kConverged
                   : SolveStatus::kNotConverged;
  return out;
}

bool certificate_feasible(const DualCertificate& cert, const DiscreteMeasure& rho0,
                          const DiscreteMeasure& rho1, const CostFunction& cost, double slack) {
  if (cert.phi.size() != rho0.size() || cert.psi.size() != rho1.size()) return false;
  for (std::size_t i = 0; i < rho0.size(); ++i) {
    for (std::size_t j = 0; j < rho1.size(); ++j) {
      if (!in_Q(cost, rho0.point(i), rho1.point(j), cert.phi[i], cert.psi[j], slack)) return false;
    }
  }
  return true;
}

namespace {

// Nelder-Mead on a concave function (maximization), in place.
void nelder_mead_maximize(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double>& x, double step, int max_evals, double& fx,
                          double& spread) {
  const std::size_t d = x.size();
  std::vector<std::vector<double>> simplex(d + 1, x);
  std::vector<double> vals(d + 1);
  for (std::size_t k = 0; k < d; ++k) simplex[k + 1][k] += step;
  for (std::size_t k = 0; k <= d; ++k) vals[k] = f(simplex[k]);
  int evals = static_cast<int>(d + 1);
  while (evals < max_evals) {
    std::vector<std::size_t> order(d + 1);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return vals[l] > vals[r]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> v2;
    for (std::size_t k : order) {
      s2.push_back(simplex[k]);
      v2.push_back(vals[k]);
    }
    simplex.swap(s2);
    vals.swap(v2);
    double size = 0.0;
    for (std::size_t k = 1; k <= d; ++k) {
      for (std::size_t c = 0; c < d; ++c) size = std::max(size, std::abs(simplex[k][c] - simplex[0][c]));
    }
    if (size < 1e-13 && vals[0] - vals[d] < 1e-15) break;
    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t c = 0; c < d; ++c) centroid[c] += simplex[k][c] / static_cast<double>(d);
    }
    auto along = [&](double t) {
      std::vector<double> p(d);
      for (std::size_t c = 0; c < d; ++c) p[c] = centroid[c] + t * (simplex[d][c] - centroid[c]);
      return p;
    };
    const auto xr = along(-1.0);
    const double fr = f(xr);
    ++evals;
    if (fr > vals[0]) {
      const auto xe = along(-2.0);
      const double fe = f(xe);
      ++evals;
      if (fe > fr) {
        simplex[d] = xe;
        vals[d] = fe;
      } else {
        simplex[d] = xr;
        vals[d] = fr;
      }
    } else if (fr > vals[d - 1]) {
      simplex[d] = xr;
      vals[d] = fr;
    } else {
      const auto xc = fr > vals[d] ? along(-0.5) : along(0.5);
      const double fc = f(xc);
      ++evals;
      if (fc > std::max(fr, vals[d])) {
        simplex[d] = xc;
        vals[d] = fc;
      } else {
        for (std::size_t k = 1; k <= d; ++k) {
          for (std::size_t c = 0; c < d; ++c) simplex[k][c] = simplex[0][c] + 0.5 * (simplex[k][c] - simplex[0][c]);
          vals[k] = f(simplex[k]);
          ++evals;
        }
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k <= d; ++k) {
    if (vals[k] > vals[best]) best = k;
  }
  x = simplex[best];
  fx = vals[best];
  spread = *std::max_element(vals.begin(), vals.end()) - *std::min_element(vals.begin(), vals.end());
}

}  // namespace

BruteForceResult brute_force_CK(const DiscreteMeasure& rho0_in, const DiscreteMeasure& rho1_in,
                                const CostFunction& cost, int grid_resolution) {
  if (rho0_in.size() > 3 || rho1_in.size() > 3) {
    throw Error(ErrorCode::kTooLarge, "brute-force oracle handles at most 3 atoms per side");
  }
  if (cost.kind() == CostKind::kClassical) {
    throw Error(ErrorCode::kInvalidArgument, "brute-force oracle supports the WF and partial costs");
  }
  if (grid_resolution < 2) throw Error(ErrorCode::kInvalidArgument, "grid_resolution must be >= 2");
  // Free potentials live on the smaller side; C_K is symmetric in its arguments.
  const bool swap = rho1_in.size() > rho0_in.size();
  const DiscreteMeasure& src = swap ? rho1_in : rho0_in;
  const DiscreteMeasure& dst = swap ? rho0_in : rho1_in;
  const std::size_t n = src.size();
  const std::size_t m = dst.size();
  const double scale = cost.dual_scale();
  if (m == 0) {
    return {cost.apex_cost() * src.total_mass(), 0.0};
  }
  if (n == 0) return {cost.apex_cost() * dst.total_mass(), 0.0};

  std::vector<double> dist(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) dist[i * m + j] = distance(src.point(i), dst.point(j));
  }
  const bool wf = cost.kind() == CostKind::kWF;
  // WF potentials are searched through psi = 1 - exp(t); partial ones directly in [-delta, delta].
  const double lo = wf ? -12.0 : -cost.delta();
  const double hi = wf ? 5.0 : cost.delta();
  auto to_psi = [&](double t) { return wf ? 1.0 - std::exp(t) : std::clamp(t, -cost.delta(), cost.delta()); };
  auto dual_value = [&](const std::vector<double>& t) {
    double value = 0.0;
    for (std::size_t j = 0; j < m; ++j) value += dst.mass(j) * to_psi(t[j]);
    for (std::size_t i = 0; i < n; ++i) {
      if (src.mass(i) == 0.0) continue;
      double phi = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) phi = std::min(phi, cost.max_partner(dist[i * m + j], to_psi(t[j])));
      value += src.mass(i) * phi;
    }
    return value;
  };

  // Tabulated c-transform kernel on the grid.
  const int g = grid_resolution;
  std::vector<double> grid(g);
  for (int k = 0; k < g; ++k) grid[k] = lo + (hi - lo) * k / (g - 1);
  std::vector<double> kernel(n * m * static_cast<std::size_t>(g));
  for (std::size_t p = 0; p < n * m; ++p) {
    for (int k = 0; k < g; ++k) kernel[p * g + k] = cost.max_partner(dist[p], to_psi(grid[k]));
  }
  std::size_t count = 1;
  for (std::size_t j = 0; j < m; ++j) count *= static_cast<std::size_t>(g);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> best_idx(m, 0), idx(m, 0);
  for (std::size_t flat = 0; flat < count; ++flat) {
    std::size_t rem = flat;
    for (std::size_t j = 0; j < m; ++j) {
      idx[j] = static_cast<int>(rem % static_cast<std::size_t>(g));
      rem /= static_cast<std::size_t>(g);
    }
    double value = 0.0;
    for (std::size_t j = 0; j < m; ++j) value += dst.mass(j) * to_psi(grid[idx[j]]);
    for (std::size_t i = 0; i < n; ++i) {
      if (src.mass(i) == 0.0) continue;
      double phi = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) phi = std::min(phi, kernel[(i * m + j) * g + idx[j]]);
      value += src.mass(i) * phi;
    }
    if (value > best) {
      best = value;
      best_idx = idx;
    }
  }
  std::vector<double> t(m);
  for (std::size_t j = 0; j < m; ++j) t[j] = grid[best_idx[j]];
  const double grid_value = best;
  double fx = best;
  double spread = 0.0;
  const double step = (hi - lo) / (g - 1);
  for (int round = 0; round < 6; ++round) {
    nelder_mead_maximize(dual_value, t, round == 0 ? step : step * 1e-2, 20000, fx, spread);
  }
  // Final polish directly in the potential (concave there).
  std::vector<double> psi(m);
  for (std::size_t j = 0; j < m; ++j) psi[j] = to_psi(t[j]);
  auto direct = [&](const std::vector<double>& s) {
    double value = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (s[j] > (wf ? 1.0 : cost.delta())) return -std::numeric_limits<double>::infinity();
      value += dst.mass(j) * s[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (src.mass(i) == 0.0) continue;
      double phi = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) phi = std::min(phi, cost.max_partner(dist[i * m + j], s[j]));
      value += src.mass(i) * phi;
    }
    return value;
  };
  double fd = direct(psi);
  for (int round = 0; round < 4; ++round) {
    nelder_mead_maximize(direct, psi, 1e-3, 20000, fd, spread);
  }
  const double value = std::max(fx, fd);
  return {scale * value, scale * std::max(value - grid_value, spread)};
}

TriangleCheck check_triangle(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1,
                             const DiscreteMeasure& rho2, const CostFunction& cost,
                             const SolverConfig& config) {
  const double q = cost.metric_exponent();
  auto leg = [&](const DiscreteMeasure& a, const DiscreteMeasure& b) {
    StaticSolution s = solve_static(a, b, cost, config);
    if (!s.converged()) {
      throw Error(ErrorCode::kNoConvergence,
                  fmt::format("triangle leg not converged (relative gap {})", s.certificate.relative_gap()));
    }
    return s.certificate;
  };
  const DualCertificate c01 = leg(rho0, rho1);
  const DualCertificate c12 = leg(rho1, rho2);
  const DualCertificate c02 = leg(rho0, rho2);
  auto root = [&](double v) { return std::pow(std::max(v, 0.0), 1.0 / q); };
  TriangleCheck out;
  out.slack = root(c01.primal) + root(c12.primal) - root(c02.primal);
  out.tolerance = (root(c01.primal) - root(c01.dual)) + (root(c12.primal) - root(c12.dual)) + 1e-12;
  out.passed = out.slack >= -out.tolerance;
  return out;
}

DiscreteMeasure quantize(const DiscreteMeasure& rho, int cells) {
  if (cells < 1) throw Error(ErrorCode::kInvalidArgument, "quantize needs at least one cell per axis");
  const int d = rho.dimension();
  // Only occupied cells are stored, so fine grids stay cheap.
  std::map<std::vector<int>, double> occupied;
  for (std::size_t a = 0; a < rho.size(); ++a) {
    std::vector<int> key(d);
    for (int k = 0; k < d; ++k) {
      const double t = (rho.point(a)[k] - rho.domain().lower()[k]) / rho.domain().extent(k) * cells;
      key[k] = std::clamp(static_cast<int>(std::floor(t)), 0, cells - 1);
    }
    occupied[key] += rho.mass(a);
  }
  std::vector<Point> pts;
  std::vector<double> masses;
  for (const auto& [key, mass] : occupied) {
    Point p(d);
    for (int k = 0; k < d; ++k) p[k] = rho.domain().lower()[k] + (key[k] + 0.5) * rho.domain().extent(k) / cells;
    pts.push_back(std::move(p));
    masses.push_back(mass);
  }
  return DiscreteMeasure(std::move(pts), std::move(masses), rho.domain());
}

ContinuityTrend weakstar_trend(const std::vector<double>& values) {
  ContinuityTrend out;
  out.values = values;
  if (values.empty()) return out;
  out.passed = values.back() <= values.front() / 10.0 || values.back() < 1e-4;
  return out;
}

ContinuityTrend check_weakstar_continuity(const DiscreteMeasure& rho, int levels,
                                          const CostFunction& cost, const SolverConfig& config) {
  std::vector<double> values;
  for (int level = 1; level <= levels; ++level) {
    const DiscreteMeasure approx = quantize(rho, 1 << (level + 1));
    values.push_back(std::max(0.0, solve_static(approx, rho, cost, config).value()));
  }
  return weakstar_trend(values);
}

double gamma_functional(const SemiCouplingPlan& plan, double delta) {
  const CostFunction cost = CostFunction::wf(delta);
  const double diff = std::sqrt(plan.mass0()) - std::sqrt(plan.mass1());
  return plan.objective(cost) - 2.0 * delta * delta * diff * diff;
}

double gamma_limit_functional(const SemiCouplingPlan& plan, double rel_tol) {
  const double total0 = plan.mass0();
  const double total1 = plan.mass1();
  if (total0 == 0.0 || total1 == 0.0) return 0.0;
  const double alpha = total1 / total0;
  double scale = 0.0;
  for (double v : plan.m1) scale = std::max(scale, std::abs(v));
  for (std::size_t p = 0; p < plan.m0.size(); ++p) {
    if (std::abs(plan.m1[p] - alpha * plan.m0[p]) > rel_tol * scale) return kInfiniteCost;
  }
  double transport = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      const double d = distance(plan.sources[i], plan.targets[j]);
      transport += d * d * plan.gamma0(i, j);
    }
  }
  return transport * std::sqrt(alpha) / 2.0;
}

double sqrt_measure(const SemiCouplingPlan& plan) {
  double s = 0.0;
  for (std::size_t p = 0; p < plan.m0.size(); ++p) s += std::sqrt(plan.m0[p] * plan.m1[p]);
  return s;
}

double gamma_limit_value(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1) {
  const double total0 = rho0.total_mass();
  const double total1 = rho1.total_mass();
  if (total0 == 0.0 || total1 == 0.0) return 0.0;
  const StaticSolution ot =
      solve_static(rho0.scaled(1.0 / total0), rho1.scaled(1.0 / total1), CostFunction::classical(2));
  // The classical cost carries |x - y|^2 / 2, which already holds the 1/2 factor.
  return std::sqrt(total0 * total1) * ot.value();
}

double partial_lagrangian_value(const DiscreteMeasure& rho0, const DiscreteMeasure& rho1, double delta,
                                int p) {
  const std::size_t n = rho0.size();
  const std::size_t m = rho1.size();
  if (n == 0 || m == 0) return 0.0;
  LinearProgram lp;
  const auto P = static_cast<Eigen::Index>(n * m);
  lp.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n + m), P);
  lp.b.resize(static_cast<Eigen::Index>(n + m));
  lp.c.resize(P);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto k = static_cast<Eigen::Index>(i * m + j);
      lp.A(static_cast<Eigen::Index>(i), k) = 1.0;
      lp.A(static_cast<Eigen::Index>(n + j), k) = 1.0;
      lp.c[k] = std::pow(distance(rho0.point(i), rho1.point(j)), p) / p - 2.0 * delta;
    }
  }
  for (std::size_t i = 0; i < n; ++i) lp.b[static_cast<Eigen::Index>(i)] = rho0.mass(i);
  for (std::size_t j = 0; j < m; ++j) lp.b[static_cast<Eigen::Index>(n + j)] = rho1.mass(j);
  lp.senses.assign(n + m, RowSense::kLessEqual);
  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::kOptimal) throw Error(ErrorCode::kNoConvergence, fmt::format("simplex: {}", to_string(sol.status)));
  return sol.objective;
}

SolverConfig solver_config_from_json(const nlohmann::json& j) {
  SolverConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "solver settings must be an object");
  auto num = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw Error(ErrorCode::kParseError, fmt::format("solver.{} must be a number", key));
    return j.at(key).get<double>();
  };
  cfg.max_iterations = static_cast<int>(num("max_iterations", cfg.max_iterations));
  cfg.tolerance = num("tolerance", cfg.tolerance);
  cfg.primal_step = num("primal_step", cfg.primal_step);
  cfg.dual_step = num("dual_step", cfg.dual_step);
  cfg.check_every = static_cast<int>(num("check_every", cfg.check_every));
  if (j.contains("restart")) cfg.adaptive_restart = j.at("restart").get<bool>();
  if (j.contains("method")) {
    const std::string m = j.at("method").get<std::string>();
    if (m == "auto") {
      cfg.method = StaticMethod::kAuto;
    } else if (m == "pdhg") {
      cfg.method = StaticMethod::kPrimalDual;
    } else if (m == "lp") {
      cfg.method = StaticMethod::kLinearProgram;
    } else {
      throw Error(ErrorCode::kParseError, fmt::format("unknown solver.method '{}'", m));
    }
  }
  return cfg;
}

nlohmann::json solution_to_json(const StaticSolution& s) {
  nlohmann::json plan;
  nlohmann::json m0 = nlohmann::json::array();
  nlohmann::json m1 = nlohmann::json::array();
  for (std::size_t i = 0; i < s.plan.rows(); ++i) {
    std::vector<double> r0(s.plan.cols()), r1(s.plan.cols());
    for (std::size_t j = 0; j < s.plan.cols(); ++j) {
      r0[j] = s.plan.gamma0(i, j);
      r1[j] = s.plan.gamma1(i, j);
    }
    m0.push_back(r0);
    m1.push_back(r1);
  }
  plan["m0"] = m0;
  plan["m1"] = m1;
  auto finite = [](std::vector<double> v) {
    for (double& x : v) {
      if (!std::isfinite(x)) x = x > 0 ? std::numeric_limits<double>::max() : std::numeric_limits<double>::lowest();
    }
    return v;
  };
  nlohmann::json j;
  j["value"] = s.certificate.primal;
  j["gap"] = s.certificate.gap;
  j["plan"] = plan;
  j["phi"] = finite(s.certificate.phi);
  j["psi"] = finite(s.certificate.psi);
  j["iterations"] = s.iterations;
  return j;
}

}  // namespace uot
