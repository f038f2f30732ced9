#include "uot/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

namespace uot {

std::size_t NodeGrid::node_count() const {
  std::size_t n = 1;
  for (int p : points) n *= static_cast<std::size_t>(p);
  return n;
}

Point NodeGrid::node(std::size_t index) const {
  Point x(dimension());
  std::size_t rest = index;
  for (int k = 0; k < dimension(); ++k) {
    const auto i = static_cast<int>(rest % static_cast<std::size_t>(points[k]));
    rest /= static_cast<std::size_t>(points[k]);
    x[k] = domain.lower()[k] + i * spacing(k);
  }
  return x;
}

AdmissibleMetric::AdmissibleMetric(NodeGrid grid, std::vector<double> gt, std::vector<double> a,
                                   std::vector<double> b)
    : grid_(std::move(grid)), gt_(std::move(gt)), a_(std::move(a)), b_(std::move(b)) {
  const int d = dimension();
  if (static_cast<int>(grid_.points.size()) != d) throw Error(ErrorCode::kInvalidDomain, "grid points per axis must match the dimension");
  for (int p : grid_.points) {
    if (p < 2) throw Error(ErrorCode::kInvalidDomain, "grid needs at least 2 nodes per axis");
  }
  const std::size_t n = grid_.node_count();
  const std::size_t gsize = d == 1 ? 1 : 3;
  if (gt_.size() != n * gsize || a_.size() != n * static_cast<std::size_t>(d) || b_.size() != n) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("metric fields need {} x ({}, {}, 1) node values", n, gsize, d));
  }
  for (double v : b_) {
    if (!(v > 0.0)) throw Error(ErrorCode::kInvalidArgument, "b must be positive at every node");
  }
}

double AdmissibleMetric::spatial_form(std::size_t index, const double* v) const {
  if (dimension() == 1) return gt_[index] * v[0] * v[0];
  const double* g = gt_.data() + 3 * index;
  return g[0] * v[0] * v[0] + 2.0 * g[1] * v[0] * v[1] + g[2] * v[1] * v[1];
}

double AdmissibleMetric::one_form(std::size_t index, const double* v) const {
  double s = 0.0;
  for (int k = 0; k < dimension(); ++k) s += a_[index * dimension() + k] * v[k];
  return s;
}

double AdmissibleMetric::quadratic_form(std::size_t index, double m, const double* v, double vm) const {
  return m * spatial_form(index, v) + one_form(index, v) * vm + b_[index] * vm * vm / m;
}

bool AdmissibleMetric::positive_definite() const {
  const int d = dimension();
  for (std::size_t i = 0; i < grid_.node_count(); ++i) {
    // 4 b gt - a a^T must be positive definite.
    const double b4 = 4.0 * b_[i];
    const double* a = a_.data() + i * d;
    if (d == 1) {
      if (!(b4 * gt_[i] - a[0] * a[0] > 0.0)) return false;
      continue;
    }
    const double* g = gt_.data() + 3 * i;
    const double m11 = b4 * g[0] - a[0] * a[0];
    const double m12 = b4 * g[1] - a[0] * a[1];
    const double m22 = b4 * g[2] - a[1] * a[1];
    if (!(m11 > 0.0 && m11 * m22 - m12 * m12 > 0.0)) return false;
  }
  return true;
}

Diagonalization is_diagonalizable(const AdmissibleMetric& metric, double curl_tolerance) {
  const NodeGrid& grid = metric.grid();
  const int d = metric.dimension();
  const std::size_t n = grid.node_count();
  std::vector<double> w(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) w[i * d + k] = metric.a()[i * d + k] / metric.b()[i];
  }

  Diagonalization out;
  // log(lambda^2) = integral of a / b from the first node.
  std::vector<double> log_l2(n, 0.0);
  if (d == 1) {
    const double h = grid.spacing(0);
    for (std::size_t i = 1; i < n; ++i) log_l2[i] = log_l2[i - 1] + 0.5 * h * (w[i - 1] + w[i]);
    out.diagonalizable = true;
  } else {
    const int n0 = grid.points[0];
    const int n1 = grid.points[1];
    const double hx = grid.spacing(0);
    const double hy = grid.spacing(1);
    auto at = [&](int i, int j, int k) { return w[(static_cast<std::size_t>(i) + static_cast<std::size_t>(n0) * j) * 2 + k]; };
    double scale = 0.0;
    for (double v : w) scale = std::max(scale, std::abs(v));
    scale /= std::min(grid.domain.extent(0), grid.domain.extent(1));
    for (int j = 0; j + 1 < n1; ++j) {
      for (int i = 0; i + 1 < n0; ++i) {
        const double circulation = 0.5 * hx * (at(i, j, 0) + at(i + 1, j, 0)) + 0.5 * hy * (at(i + 1, j, 1) + at(i + 1, j + 1, 1)) -
                                   0.5 * hx * (at(i, j + 1, 0) + at(i + 1, j + 1, 0)) - 0.5 * hy * (at(i, j, 1) + at(i, j + 1, 1));
        out.max_curl = std::max(out.max_curl, std::abs(circulation / (hx * hy)));
      }
    }
    out.diagonalizable = out.max_curl <= curl_tolerance * std::max(scale, 1e-300);
    if (!out.diagonalizable) return out;
    // Along the bottom edge, then up every column.
    for (int i = 1; i < n0; ++i) log_l2[i] = log_l2[i - 1] + 0.5 * hx * (at(i - 1, 0, 0) + at(i, 0, 0));
    for (int j = 1; j < n1; ++j) {
      for (int i = 0; i < n0; ++i) {
        const std::size_t here = static_cast<std::size_t>(i) + static_cast<std::size_t>(n0) * j;
        log_l2[here] = log_l2[here - n0] + 0.5 * hy * (at(i, j - 1, 1) + at(i, j, 1));
      }
    }
  }

  std::vector<double> lambda(n), c(n), g(metric.gt().size());
  for (std::size_t i = 0; i < n; ++i) {
    lambda[i] = std::exp(0.5 * log_l2[i]);
    c[i] = metric.b()[i] / lambda[i];
    const double b4 = 4.0 * metric.b()[i];
    const double* a = metric.a().data() + i * d;
    if (d == 1) {
      g[i] = (metric.gt()[i] - a[0] * a[0] / b4) / lambda[i];
    } else {
      const double* gt = metric.gt().data() + 3 * i;
      g[3 * i] = (gt[0] - a[0] * a[0] / b4) / lambda[i];
      g[3 * i + 1] = (gt[1] - a[0] * a[1] / b4) / lambda[i];
      g[3 * i + 2] = (gt[2] - a[1] * a[1] / b4) / lambda[i];
    }
  }
  out.lambda = std::move(lambda);
  out.c = std::move(c);
  out.g = std::move(g);
  return out;
}

double pullback_error(const AdmissibleMetric& metric, const Diagonalization& diag, int samples, unsigned seed) {
  if (!diag.diagonalizable || !diag.lambda) throw Error(ErrorCode::kInvalidArgument, "metric was not diagonalized");
  const NodeGrid& grid = metric.grid();
  const int d = metric.dimension();
  const std::vector<double>& lambda = *diag.lambda;
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> pick0(0, grid.points[0] - 1);
  std::uniform_int_distribution<int> pick1(0, d == 2 ? grid.points[1] - 1 : 0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> logm(std::log(0.1), std::log(10.0));
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int i0 = pick0(rng);
    const int i1 = pick1(rng);
    const std::size_t node = static_cast<std::size_t>(i0) + static_cast<std::size_t>(grid.points[0]) * i1;
    const double t = std::exp(logm(rng));
    double v[2] = {unit(rng), unit(rng)};
    const double vt = unit(rng);
    // d lambda = lambda a / (2 b), the relation lambda was integrated from.
    const double dl = lambda[node] * metric.one_form(node, v) / (2.0 * metric.b()[node]);
    const double y = lambda[node] * t;
    const double dy = t * dl + lambda[node] * vt;
    double gv = 0.0;
    const std::vector<double>& g = *diag.g;
    if (d == 1) {
      gv = g[node] * v[0] * v[0];
    } else {
      gv = g[3 * node] * v[0] * v[0] + 2.0 * g[3 * node + 1] * v[0] * v[1] + g[3 * node + 2] * v[1] * v[1];
    }
    const double pulled = y * gv + (*diag.c)[node] / y * dy * dy;
    const double original = metric.quadratic_form(node, t, v, vt);
    worst = std::max(worst, std::abs(pulled - original) / std::abs(original));
  }
  return worst;
}

double cone_sectional_curvature(double kg, double m) {
  if (!(m > 0.0)) throw Error(ErrorCode::kNonpositiveMass, "cone curvature needs m > 0");
  return (kg - 1.0) / (m * m);
}

namespace {

std::vector<double> cell_densities(const GridDensity& rho) {
  if (rho.domain.dimension() != 1) throw Error(ErrorCode::kInvalidArgument, "horizontal lift is implemented in 1D");
  std::vector<double> r(rho.values.size());
  const double h = rho.cell_width(0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = rho.values[i] / h;
    if (!(r[i] > 0.0)) throw Error(ErrorCode::kNonpositiveDensity, fmt::format("density must be positive (cell {})", i));
  }
  return r;
}

// Applies -(rho phi')' + rho phi / delta^2 with zero-flux ends.
std::vector<double> lift_operator(const std::vector<double>& r, const std::vector<double>& phi, double h, double delta) {
  const std::size_t n = r.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double flux = 0.0;
    if (i + 1 < n) flux -= 0.5 * (r[i] + r[i + 1]) * (phi[i + 1] - phi[i]);
    if (i > 0) flux += 0.5 * (r[i - 1] + r[i]) * (phi[i] - phi[i - 1]);
    out[i] = flux / (h * h) + r[i] * phi[i] / (delta * delta);
  }
  return out;
}

}  // namespace

HorizontalLift horizontal_lift(const GridDensity& rho, const std::vector<double>& x, double delta) {
  const std::vector<double> r = cell_densities(rho);
  const std::size_t n = r.size();
  if (x.size() != n) throw Error(ErrorCode::kLengthMismatch, "tangent vector and density differ in length");
  if (!(delta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  const double h = rho.cell_width(0);
  // Tridiagonal system, Thomas algorithm (diagonally dominant).
  std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    diag[i] = r[i] / (delta * delta);
    if (i + 1 < n) {
      const double f = 0.5 * (r[i] + r[i + 1]) / (h * h);
      diag[i] += f;
      upper[i] = -f;
    }
    if (i > 0) {
      const double f = 0.5 * (r[i - 1] + r[i]) / (h * h);
      diag[i] += f;
      lower[i] = -f;
    }
  }
  std::vector<double> c(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = diag[i] - (i > 0 ? lower[i] * c[i - 1] : 0.0);
    if (!(std::abs(denom) > 0.0) || !std::isfinite(denom)) throw Error(ErrorCode::kSingularSystem, "lift system is singular");
    c[i] = upper[i] / denom;
    d[i] = (x[i] - (i > 0 ? lower[i] * d[i - 1] : 0.0)) / denom;
  }
  HorizontalLift out;
  out.phi.assign(n, 0.0);
  for (std::size_t k = n; k-- > 0;) out.phi[k] = d[k] - (k + 1 < n ? c[k] * out.phi[k + 1] : 0.0);
  out.velocity.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) out.velocity[i] = (out.phi[i + 1] - out.phi[i]) / h;
  out.growth.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.growth[i] = out.phi[i] / (delta * delta);
  const std::vector<double> applied = lift_operator(r, out.phi, h, delta);
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) res += (applied[i] - x[i]) * (applied[i] - x[i]);
  out.residual = std::sqrt(res);
  return out;
}

TangentNorm wf_tangent_norm(const GridDensity& rho, const std::vector<double>& x, double delta) {
  const HorizontalLift lift = horizontal_lift(rho, x, delta);
  const double h = rho.cell_width(0);
  TangentNorm out;
  for (std::size_t i = 0; i < x.size(); ++i) out.duality += lift.phi[i] * x[i] * h;
  out.duality *= 0.5;
  out.energy = lift_energy(rho, lift.velocity, lift.growth, delta);
  return out;
}

double lift_energy(const GridDensity& rho, const std::vector<double>& v, const std::vector<double>& alpha, double delta) {
  const std::vector<double> r = cell_densities(rho);
  const std::size_t n = r.size();
  if (v.size() + 1 != n || alpha.size() != n) throw Error(ErrorCode::kLengthMismatch, "need N - 1 face and N cell values");
  const double h = rho.cell_width(0);
  double e = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) e += 0.5 * (r[i] + r[i + 1]) * v[i] * v[i] * h;
  for (std::size_t i = 0; i < n; ++i) e += delta * delta * alpha[i] * alpha[i] * r[i] * h;
  return 0.5 * e;
}

std::vector<double> lift_constraint(const GridDensity& rho, const std::vector<double>& v, const std::vector<double>& alpha) {
  const std::vector<double> r = cell_densities(rho);
  const std::size_t n = r.size();
  if (v.size() + 1 != n || alpha.size() != n) throw Error(ErrorCode::kLengthMismatch, "need N - 1 face and N cell values");
  const double h = rho.cell_width(0);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double high = i + 1 < n ? 0.5 * (r[i] + r[i + 1]) * v[i] : 0.0;
    const double low = i > 0 ? 0.5 * (r[i - 1] + r[i]) * v[i - 1] : 0.0;
    out[i] = -(high - low) / h + alpha[i] * r[i];
  }
  return out;
}

namespace {

std::vector<double> flatten_field(const nlohmann::json& j, const char* name, std::size_t nodes, std::size_t width) {
  if (!j.contains(name)) throw Error(ErrorCode::kParseError, fmt::format("metric file: missing field '{}'", name));
  const nlohmann::json& f = j.at(name);
  if (!f.is_array() || f.size() != nodes) {
    throw Error(ErrorCode::kParseError, fmt::format("metric file: '{}' must list {} node values", name, nodes));
  }
  std::vector<double> out;
  out.reserve(nodes * width);
  for (std::size_t i = 0; i < nodes; ++i) {
    const nlohmann::json& v = f[i];
    if (width == 1 && v.is_number()) {
      out.push_back(v.get<double>());
      continue;
    }
    if (!v.is_array() || v.size() != width) {
      throw Error(ErrorCode::kParseError, fmt::format("metric file: '{}'[{}] must have {} components", name, i, width));
    }
    for (const auto& c : v) {
      if (!c.is_number()) throw Error(ErrorCode::kParseError, fmt::format("metric file: '{}'[{}] is not numeric", name, i));
      out.push_back(c.get<double>());
    }
  }
  return out;
}

}  // namespace

AdmissibleMetric metric_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("grid")) throw Error(ErrorCode::kParseError, "metric file: missing 'grid'");
  const nlohmann::json& gj = j.at("grid");
  NodeGrid grid;
  try {
    grid.domain = DomainBox(gj.at("lower").get<std::vector<double>>(), gj.at("upper").get<std::vector<double>>());
    grid.points = gj.at("points").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, fmt::format("metric file: bad grid ({})", e.what()));
  }
  if (static_cast<int>(grid.points.size()) != grid.dimension()) {
    throw Error(ErrorCode::kParseError, "metric file: grid.points must have one entry per axis");
  }
  for (int p : grid.points) {
    if (p < 2) throw Error(ErrorCode::kParseError, "metric file: grid needs at least 2 nodes per axis");
  }
  const std::size_t n = grid.node_count();
  const int d = grid.dimension();
  auto gt = flatten_field(j, "g", n, d == 1 ? 1 : 3);
  auto a = flatten_field(j, "a", n, static_cast<std::size_t>(d));
  auto b = flatten_field(j, "b", n, 1);
  return AdmissibleMetric(std::move(grid), std::move(gt), std::move(a), std::move(b));
}

nlohmann::json diagonalization_to_json(const Diagonalization& d) {
  nlohmann::json j;
  j["diagonalizable"] = d.diagonalizable;
  j["max_curl"] = d.max_curl;
  if (d.lambda) j["lambda"] = *d.lambda;
  if (d.c) j["c"] = *d.c;
  if (d.g) j["g"] = *d.g;
  return j;
}

}  // namespace uot
