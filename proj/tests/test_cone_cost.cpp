#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "uot/cone_cost.hpp"

using namespace uot;
using std::numbers::pi;

namespace {

// Golden-section minimum of a unimodal function on [lo, hi].
double golden_min(auto&& f, double lo, double hi, int iters = 200) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi, c = b - r * (b - a), d = a + r * (b - a);
  for (int i = 0; i < iters; ++i) {
    if (f(c) < f(d)) b = d;
    else a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return f(0.5 * (a + b));
}

// sup over the normalized WF dual set of a m0 + b m1, scanning the boundary
// b = 1 - k / (1 - a) in s = 1 - a > 0.
double wf_support_oracle(double dist, double delta, double m0, double m1) {
  const double k = std::pow(std::cos(std::min(dist / (2 * delta), pi / 2)), 2);
  if (m0 == 0.0 || m1 == 0.0 || k == 0.0) return 2 * delta * delta * (m0 + m1 - 0.0);
  auto neg = [&](double logs) {
    const double s = std::exp(logs);
    return -((1 - s) * m0 + (1 - k / s) * m1);
  };
  double best = 1e300;
  for (int i = 0; i <= 400; ++i) best = std::min(best, neg(-20.0 + 40.0 * i / 400));
  double lo = -20.0, hi = 20.0;
  for (int i = 0; i <= 400; ++i) {
    const double x = -20.0 + 40.0 * i / 400;
    if (neg(x) == best) lo = x - 0.1, hi = x + 0.1;
  }
  best = std::min(best, golden_min(neg, lo, hi));
  return -best * 2 * delta * delta;
}

double partial_support_oracle(double dist, double delta, int p, double m0, double m1) {
  const double k = std::pow(dist, p) / p;
  auto neg = [&](double a) { return -(a * m0 + std::min(delta, k - a) * m1); };
  double best = 1e300;
  for (int i = 0; i <= 2000; ++i) best = std::min(best, neg(-5.0 + (delta + 5.0) * i / 2000));
  return std::max(-best, -golden_min(neg, -5.0, delta));
}

}  // namespace

TEST_CASE("WF cost matches the closed form") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 200; ++s) {
    const Point x0{u(rng)}, x1{u(rng)};
    const double m0 = 0.1 + 2 * u(rng), m1 = 0.1 + 2 * u(rng), delta = 0.05 + u(rng);
    const double d = std::abs(x0[0] - x1[0]);
    const double expect =
        2 * delta * delta * (m0 + m1 - 2 * std::sqrt(m0 * m1) * std::cos(std::min(d / (2 * delta), pi / 2)));
    CHECK(wf_cost(x0, m0, x1, m1, delta) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(wf_cost(x0, m0, x1, m1, delta) == doctest::Approx(wf_cost(x1, m1, x0, m0, delta)).epsilon(1e-14));
    CHECK(wf_cost(x0, 3 * m0, x1, 3 * m1, delta) == doctest::Approx(3 * wf_cost(x0, m0, x1, m1, delta)).epsilon(1e-12));
  }
  CHECK(wf_cost({0.2}, 1.5, {0.9}, 0.0, 0.3) == doctest::Approx(2 * 0.09 * 1.5));
  CHECK(wf_cost({0.2}, 1.0, {0.2}, 1.0, 0.3) == 0.0);
  // Beyond the cut distance pi * delta the cost no longer depends on the distance.
  CHECK(wf_cost({0.0}, 1.0, {0.5}, 2.0, 0.1) == doctest::Approx(wf_cost({0.0}, 1.0, {0.9}, 2.0, 0.1)));
}

TEST_CASE("WF cost is 2 delta^2 times the squared cone distance below the cut") {
  for (double d : {0.0, 0.1, 0.4, 0.9}) {
    const double delta = 0.5;
    const double cone = cone_distance(1.3, 0.4, d / (2 * delta));
    CHECK(wf_cost({0.0}, 1.3, {d}, 0.4, delta) == doctest::Approx(2 * delta * delta * cone * cone));
  }
  CHECK(cone_distance(1.0, 4.0, pi) == doctest::Approx(3.0));
  CHECK(cone_distance(1.0, 4.0, 10.0) == doctest::Approx(3.0));
  CHECK(cone_distance(2.0, 0.0, 0.3) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("partial and classical costs") {
  const double delta = 0.3;
  // |x - y|^2 / 2 = 0.08 < 2 delta
  CHECK(partial_ot_cost({0.1}, 1.0, {0.5}, 1.5, delta, 2) == doctest::Approx(0.08 * 1.0 + delta * 0.5));
  // far apart: transport capped at 2 delta, i.e. destroy and create
  CHECK(partial_ot_cost({0.0}, 1.0, {1.0}, 1.0, 0.1, 1) == doctest::Approx(0.2));
  const auto classical = CostFunction::classical(2);
  CHECK(classical.evaluate({0.0}, 1.0, {0.5}, 1.0) == doctest::Approx(0.125));
  CHECK(std::isinf(classical.evaluate({0.0}, 1.0, {0.5}, 2.0)));
  CHECK(CostFunction::wf(0.3).apex_cost() == doctest::Approx(0.18));
  CHECK(CostFunction::partial(0.3, 2).apex_cost() == doctest::Approx(0.3));
  CHECK(CostFunction::wf(0.3).metric_exponent() == 2.0);
  CHECK(CostFunction::partial(0.3, 1).metric_exponent() == 1.0);
  CHECK_THROWS_AS(CostFunction::wf(0.3).evaluate({0.0}, -1.0, {0.0}, 1.0), Error);
  CHECK_THROWS_AS(CostFunction::wf(-1.0), Error);
}

TEST_CASE("cost equals the scaled support function of its dual set") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < 100; ++s) {
    const double dist = 1.5 * u(rng), delta = 0.1 + u(rng), m0 = 0.05 + u(rng), m1 = 0.05 + u(rng);
    const auto wf = CostFunction::wf(delta);
    CHECK(wf.evaluate_at_distance(dist, m0, m1) ==
          doctest::Approx(wf_support_oracle(dist, delta, m0, m1)).epsilon(1e-7));
    const int p = 1 + s % 2;
    const auto partial = CostFunction::partial(delta, p);
    CHECK(partial.evaluate_at_distance(dist, m0, m1) ==
          doctest::Approx(partial_support_oracle(dist, delta, p, m0, m1)).epsilon(1e-9));
  }
}

TEST_CASE("dual set projection") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& cost : {CostFunction::wf(0.4), CostFunction::partial(0.3, 2), CostFunction::partial(0.2, 1),
                           CostFunction::classical(2)}) {
    for (int s = 0; s < 500; ++s) {
      const double dist = 2 * u(rng);
      const double a = n(rng), b = n(rng);
      const auto p = cost.project_dual_set(dist, a, b);
      CHECK(cost.in_dual_set(dist, p.a, p.b, 1e-9));
      const auto again = cost.project_dual_set(dist, p.a, p.b);
      CHECK(again.a == doctest::Approx(p.a).epsilon(1e-9));
      CHECK(again.b == doctest::Approx(p.b).epsilon(1e-9));
      if (cost.in_dual_set(dist, a, b)) {
        CHECK(p.a == doctest::Approx(a).epsilon(1e-9));
        CHECK(p.b == doctest::Approx(b).epsilon(1e-9));
      }
      // Variational inequality against random members of the set.
      for (int t = 0; t < 5; ++t) {
        const double qb = std::min(n(rng), cost.kind() == CostKind::kClassical ? 5.0 : 0.999);
        const double qa = cost.max_partner(dist, qb) - std::abs(n(rng));
        if (!std::isfinite(qa)) continue;
        REQUIRE(cost.in_dual_set(dist, qa, qb, 1e-12));
        const double ip = (a - p.a) * (qa - p.a) + (b - p.b) * (qb - p.b);
        CHECK(ip <= 1e-8 * (1 + std::abs(a) + std::abs(b)));
      }
    }
  }
}

TEST_CASE("max_partner is the boundary of the dual set") {
  const auto wf = CostFunction::wf(0.5);
  for (double b : {-3.0, -0.5, 0.0, 0.5, 0.9}) {
    const double a = wf.max_partner(0.4, b);
    CHECK(wf.in_dual_set(0.4, a, b, 1e-12));
    CHECK_FALSE(wf.in_dual_set(0.4, a + 1e-6, b));
  }
  CHECK(std::isinf(wf.max_partner(0.4, 1.5)));
  const auto partial = CostFunction::partial(0.3, 2);
  CHECK(partial.max_partner(0.0, -1.0) == doctest::Approx(0.3));
  CHECK(partial.max_partner(0.2, 0.1) == doctest::Approx(0.02 - 0.1));
}

TEST_CASE("truncated cosine") {
  CHECK(truncated_cos(0.0) == 1.0);
  CHECK(truncated_cos(-pi / 3) == doctest::Approx(0.5));
  CHECK(truncated_cos(2.0) == doctest::Approx(0.0));
  CHECK(truncated_cos(100.0) == truncated_cos(pi / 2));
}

TEST_CASE("cost json") {
  for (const auto& c : {CostFunction::wf(0.7), CostFunction::partial(0.2, 1), CostFunction::classical(2)}) {
    CHECK(cost_from_json(cost_to_json(c)) == c);
  }
  CHECK_THROWS_AS(cost_from_json({{"kind", "gromov"}}), Error);
  CHECK_THROWS_AS(cost_from_json({{"kind", "wf"}, {"delta", "big"}}), Error);
}

TEST_CASE("two-chunk regularization") {
  const double delta = 0.25;
  auto path = [&](const Point& x0, double m0, const Point& x1, double m1) {
    const double c = cone_distance(m0, m1, distance(x0, x1) / (2 * delta));
    return 2 * delta * delta * c * c;
  };
  // Below the cut the path cost is already convex and the split changes nothing.
  CHECK(two_chunk_regularize(path, {0.0}, 1.0, {0.3}, 2.0) == doctest::Approx(path({0.0}, 1.0, {0.3}, 2.0)).epsilon(1e-9));
  // Past the cut distance the best split routes all mass through the apex.
  const double far = two_chunk_regularize(path, {0.0}, 1.0, {0.9}, 2.0);
  CHECK(far == doctest::Approx(wf_cost({0.0}, 1.0, {0.9}, 2.0, delta)).epsilon(1e-6));
  CHECK(far < path({0.0}, 1.0, {0.9}, 2.0));
  CHECK_THROWS_AS(two_chunk_regularize(path, {0.0}, -1.0, {0.9}, 2.0), Error);
}
