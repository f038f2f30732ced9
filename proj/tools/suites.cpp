#include "suites.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "uot/dynamic_solver.hpp"

namespace uot::cli {
namespace {

using Rng = std::mt19937_64;

Rng instance_rng(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

DiscreteMeasure random_measure(Rng& rng, int dimension, int atoms) {
  std::vector<Point> points;
  std::vector<double> masses;
  for (int i = 0; i < atoms; ++i) {
    Point p(dimension);
    for (double& x : p) x = uniform(rng, 0.0, 1.0);
    points.push_back(p);
    masses.push_back(uniform(rng, 0.2, 2.0));
  }
  return DiscreteMeasure(points, masses, DomainBox::unit(dimension));
}

// Even instances use WF, odd ones partial transport.
CostFunction random_cost(Rng& rng, int index) {
  if (index % 2 == 0) return CostFunction::wf(uniform(rng, 0.2, 1.0));
  const double delta = uniform(rng, 0.05, 0.5);
  return CostFunction::partial(delta, uniform_int(rng, 1, 2));
}

SolverConfig suite_config(const SuiteOptions& o, double default_tol) {
  SolverConfig cfg;
  cfg.tolerance = o.tolerance > 0 ? o.tolerance : default_tol;
  if (o.max_iterations > 0) cfg.max_iterations = o.max_iterations;
  return cfg;
}

InstanceOutcome metric_instance(Rng& rng, int index, const SuiteOptions& o) {
  const int dim = uniform_int(rng, 1, 2);
  const auto r0 = random_measure(rng, dim, uniform_int(rng, 1, 4));
  const auto r1 = random_measure(rng, dim, uniform_int(rng, 1, 4));
  const auto r2 = random_measure(rng, dim, uniform_int(rng, 1, 4));
  const CostFunction cost = random_cost(rng, index);
  const SolverConfig cfg = suite_config(o, 1e-10);

  const auto forward = solve_static(r0, r1, cost, cfg);
  const auto backward = solve_static(r1, r0, cost, cfg);
  const auto self = solve_static(r0, r0, cost, cfg);
  const auto tri = check_triangle(r0, r1, r2, cost, cfg);

  const double scale = std::max(std::abs(forward.value()), 1e-9 * r0.total_mass());
  const double asym = std::abs(forward.value() - backward.value()) / scale;
  const double identity = self.value() / r0.total_mass();
  InstanceOutcome out;
  out.slack = tri.slack;
  out.passed = forward.converged() && backward.converged() && asym <= 1e-9 && identity <= 1e-9 && tri.passed &&
               tri.slack >= -1e-7;
  out.detail = fmt::format("asymmetry {:.3g}, identity {:.3g}, triangle slack {:.3g}", asym, identity, tri.slack);
  return out;
}

InstanceOutcome duality_instance(Rng& rng, int index, const SuiteOptions& o) {
  const int dim = uniform_int(rng, 1, 2);
  const auto r0 = random_measure(rng, dim, uniform_int(rng, 1, 5));
  const auto r1 = random_measure(rng, dim, uniform_int(rng, 1, 5));
  const CostFunction cost = random_cost(rng, index);
  const SolverConfig cfg = suite_config(o, 1e-6);
  const auto s = solve_static(r0, r1, cost, cfg);
  const bool feasible = certificate_feasible(s.certificate, r0, r1, cost);
  InstanceOutcome out;
  out.slack = cfg.tolerance - s.certificate.relative_gap();
  out.passed = s.converged() && feasible && out.slack >= 0;
  out.detail = fmt::format("relative gap {:.3g}, feasible {}", s.certificate.relative_gap(), feasible);
  return out;
}

DiscreteMeasure bump(double center, double width, double mass, int atoms) {
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

InstanceOutcome equivalence_instance(Rng& rng, int, const SuiteOptions& o) {
  constexpr int kGrid = 16;
  const double c0 = uniform(rng, 0.25, 0.45);
  const double c1 = c0 + uniform(rng, 0.1, 0.3);
  const auto r0 = bump(c0, uniform(rng, 0.05, 0.08), uniform(rng, 0.7, 1.5), 256);
  const auto r1 = bump(c1, uniform(rng, 0.05, 0.08), uniform(rng, 0.7, 1.5), 256);
  const auto cost = InfinitesimalCost::wf(uniform(rng, 0.25, 0.5));

  const auto reference = solve_static(quantize(r0, kGrid), quantize(r1, kGrid), cost.static_cost(),
                                      suite_config(o, 1e-7));
  DynamicConfig dc;
  dc.max_iterations = 3000;
  const auto dynamic = solve_dynamic(r0, r1, cost, kGrid, kGrid, dc);
  const double discrepancy = std::abs(dynamic.value - reference.value()) / reference.value();
  InstanceOutcome out;
  out.slack = 0.05 - discrepancy;
  out.passed = out.slack >= 0;
  out.detail = fmt::format("C_D {:.8g}, C_K {:.8g}, discrepancy {:.3g}", dynamic.value, reference.value(),
                           discrepancy);
  return out;
}

InstanceOutcome continuity_instance(Rng& rng, int index, const SuiteOptions& o) {
  const int dim = uniform_int(rng, 1, 2);
  const auto rho = random_measure(rng, dim, uniform_int(rng, 1, 6));
  const CostFunction cost = random_cost(rng, index);
  const auto trend = check_weakstar_continuity(rho, 12, cost, suite_config(o, 1e-8));
  InstanceOutcome out;
  out.passed = trend.passed;
  const double first = trend.values.front(), last = trend.values.back();
  out.slack = std::max(first / 10.0 - last, 1e-4 - last);
  out.detail = fmt::format("first {:.3g}, last {:.3g}", first, last);
  return out;
}

}  // namespace

SuiteReport run_suite(const std::string& suite, const SuiteOptions& options) {
  std::function<InstanceOutcome(Rng&, int, const SuiteOptions&)> run;
  if (suite == "metric") run = metric_instance;
  else if (suite == "duality") run = duality_instance;
  else if (suite == "equivalence") run = equivalence_instance;
  else if (suite == "continuity") run = continuity_instance;
  else throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown suite '{}'", suite));

  SuiteReport report;
  report.suite = suite;
  report.outcomes.resize(std::max(options.count, 0));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k = next++; k < options.count; k = next++) {
      Rng rng = instance_rng(options.seed, k);
      try {
        report.outcomes[k] = run(rng, k, options);
      } catch (const std::exception& e) {
        report.outcomes[k] = {false, -std::numeric_limits<double>::infinity(), e.what()};
      }
    }
  };
  const int workers = std::clamp(options.workers, 1, std::max(options.count, 1));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  report.worst_slack = std::numeric_limits<double>::infinity();
  for (const auto& o : report.outcomes) {
    (o.passed ? report.passed : report.failed)++;
    report.worst_slack = std::min(report.worst_slack, o.slack);
  }
  if (report.outcomes.empty()) report.worst_slack = 0.0;
  return report;
}

}  // namespace uot::cli
