#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "uot/dynamic_solver.hpp"
#include "uot/measures.hpp"

namespace uot::test {

inline DiscreteMeasure random_measure(std::mt19937_64& rng, int dimension, int atoms, double lo = 0.2,
                                      double hi = 2.0) {
  std::uniform_real_distribution<double> pos(0.0, 1.0), mass(lo, hi);
  std::vector<Point> points;
  std::vector<double> masses;
  for (int i = 0; i < atoms; ++i) {
    Point p(dimension);
    for (double& x : p) x = pos(rng);
    points.push_back(p);
    masses.push_back(mass(rng));
  }
  return DiscreteMeasure(points, masses, DomainBox::unit(dimension));
}

inline DiscreteMeasure dirac(double x, double m) { return DiscreteMeasure({{x}}, {m}, DomainBox::unit(1)); }

// Gaussian bump sampled at `atoms` cell centers of [0, 1], normalized to `mass`.
inline DiscreteMeasure bump(double center, double width, double mass, int atoms = 256) {
  std::vector<Point> points;
  std::vector<double> masses;
  double total = 0.0;
  for (int i = 0; i < atoms; ++i) {
    const double x = (i + 0.5) / atoms;
    const double z = (x - center) / width;
    points.push_back({x});
    masses.push_back(std::exp(-0.5 * z * z));
    total += masses.back();
  }
  for (double& m : masses) m *= mass / total;
  return DiscreteMeasure(points, masses, DomainBox::unit(1));
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline double golden_min(const auto& f, double lo, double hi) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
  }
  return 0.5 * (a + b);
}

// prox of tau f at z by direct minimization: for fixed rho > 0 the optimal
// omega and zeta are explicit, leaving a convex problem in rho.
inline std::array<double, 3> prox_oracle(const InfinitesimalCost& f, double tau, std::array<double, 3> z) {
  const double delta = f.delta();
  auto inner = [&](double rho) {
    std::array<double, 3> w{rho, z[1] * rho / (rho + tau), 0.0};
    if (f.kind() == DynamicKind::kWF) {
      w[2] = z[2] * rho / (rho + tau * delta * delta);
    } else {
      w[2] = std::copysign(std::max(std::abs(z[2]) - tau * delta, 0.0), z[2]);
    }
    return w;
  };
  auto objective = [&](double rho) {
    const auto w = inner(rho);
    const double d0 = w[0] - z[0], d1 = w[1] - z[1], d2 = w[2] - z[2];
    return tau * f.evaluate(w[0], &w[1], 1, w[2]) + 0.5 * (d0 * d0 + d1 * d1 + d2 * d2);
  };
  const double hi = std::abs(z[0]) + std::abs(z[1]) + std::abs(z[2]) + tau * 10;
  const double rho = golden_min(objective, 0.0, hi);
  // rho = 0 is only attainable with omega = 0 (and zeta = 0 for WF).
  std::array<double, 3> zero{0.0, 0.0, f.kind() == DynamicKind::kWF ? 0.0 : inner(0.0)[2]};
  const double at_zero = tau * f.evaluate(0.0, &zero[1], 1, zero[2]) +
                         0.5 * (z[0] * z[0] + z[1] * z[1] + (zero[2] - z[2]) * (zero[2] - z[2]));
  return objective(rho) < at_zero ? inner(rho) : zero;
}

}  // namespace uot::test
