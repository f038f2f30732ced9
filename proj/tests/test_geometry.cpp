#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "uot/error.hpp"
#include "uot/geometry.hpp"

using namespace uot;

namespace {

using Field = std::function<std::vector<double>(const Point&)>;

// Samples gt, a and b on an n-node (per axis) grid of the unit box.
AdmissibleMetric sample_metric(int dim, int n, const Field& gt, const Field& a, const Field& b) {
  NodeGrid grid{DomainBox::unit(dim), std::vector<int>(dim, n)};
  std::vector<double> g, av, bv;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    const Point x = grid.node(i);
    for (double v : gt(x)) g.push_back(v);
    for (double v : a(x)) av.push_back(v);
    bv.push_back(b(x)[0]);
  }
  return AdmissibleMetric(grid, g, av, bv);
}

std::vector<double> one(const Point&) { return {1.0}; }
std::vector<double> identity2(const Point&) { return {1.0, 0.0, 1.0}; }

GridDensity uniform_density(int n, double density = 1.0) {
  GridDensity g{DomainBox::unit(1), {n}, std::vector<double>(n, density / n)};
  return g;
}

std::vector<double> cosine(int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::cos(std::numbers::pi * (i + 0.5) / n);
  return x;
}

double max_lambda_error(const AdmissibleMetric& m, const std::function<double(const Point&)>& exact,
                        double curl_tol = 1e-8) {
  const auto d = is_diagonalizable(m, curl_tol);
  REQUIRE(d.diagonalizable);
  double e = 0.0;
  for (std::size_t i = 0; i < m.grid().node_count(); ++i) {
    e = std::max(e, std::abs((*d.lambda)[i] - exact(m.grid().node(i))));
  }
  return e;
}

}  // namespace

TEST_CASE("node grid") {
  NodeGrid g{DomainBox({0.0, -1.0}, {2.0, 1.0}), {5, 3}};
  CHECK(g.node_count() == 15);
  CHECK(g.spacing(0) == doctest::Approx(0.5));
  CHECK(g.node(7)[0] == doctest::Approx(1.0));
  CHECK(g.node(7)[1] == doctest::Approx(0.0));
}

TEST_CASE("metric construction and positivity") {
  auto a_const = [](double v) { return [v](const Point&) { return std::vector<double>{v}; }; };
  CHECK(sample_metric(1, 4, one, a_const(1.9), one).positive_definite());
  CHECK_FALSE(sample_metric(1, 4, one, a_const(2.1), one).positive_definite());
  const auto m = sample_metric(1, 4, one, a_const(0.5), one);
  const double v = 2.0;
  CHECK(m.quadratic_form(1, 3.0, &v, 0.6) == doctest::Approx(3.0 * 4.0 + 0.5 * 2.0 * 0.6 + 0.36 / 3.0));
  CHECK_THROWS_AS(sample_metric(1, 4, one, a_const(0.0), a_const(0.0)), Error);
  CHECK_THROWS_AS(AdmissibleMetric(NodeGrid{DomainBox::unit(1), {1}}, {1.0}, {0.0}, {1.0}), Error);
  CHECK_THROWS_AS(AdmissibleMetric(NodeGrid{DomainBox::unit(1), {3}}, {1.0, 1.0}, {0.0, 0.0, 0.0}, {1, 1, 1}), Error);
}

TEST_CASE("diagonalization") {
  SUBCASE("no mixed term") {
    auto b = [](const Point& x) { return std::vector<double>{1.0 + x[0]}; };
    const auto m = sample_metric(1, 11, one, [](const Point&) { return std::vector<double>{0.0}; }, b);
    const auto d = is_diagonalizable(m);
    REQUIRE(d.diagonalizable);
    for (std::size_t i = 0; i < 11; ++i) {
      CHECK((*d.lambda)[i] == 1.0);
      CHECK((*d.c)[i] == doctest::Approx(m.b()[i]));
      CHECK((*d.g)[i] == doctest::Approx(1.0));
    }
  }
  SUBCASE("1D is always diagonalizable, lambda converges at second order") {
    // a / b = sin(3x): lambda = exp((1 - cos 3x) / 6).
    auto a = [](const Point& x) { return std::vector<double>{0.5 * std::sin(3 * x[0])}; };
    auto b = [](const Point&) { return std::vector<double>{0.5}; };
    auto exact = [](const Point& x) { return std::exp((1.0 - std::cos(3 * x[0])) / 6.0); };
    const double e1 = max_lambda_error(sample_metric(1, 33, one, a, b), exact);
    const double e2 = max_lambda_error(sample_metric(1, 65, one, a, b), exact);
    CHECK(std::log2(e1 / e2) >= 1.9);
  }
  SUBCASE("2D gradient form") {
    // a / b = grad sin(2x + y): lambda = exp(sin(2x + y) / 2).
    auto a = [](const Point& x) {
      const double c = std::cos(2 * x[0] + x[1]);
      return std::vector<double>{2 * c, c};
    };
    auto exact = [](const Point& x) { return std::exp(0.5 * std::sin(2 * x[0] + x[1])); };
    // The discrete curl of a sampled gradient is O(h^2), so the tolerance has
    // to sit above that.
    const auto m = sample_metric(2, 33, identity2, a, one);
    CHECK_FALSE(is_diagonalizable(m, 1e-6).diagonalizable);
    const auto d = is_diagonalizable(m, 1e-2);
    CHECK(d.diagonalizable);
    CHECK(d.max_curl <= 4.0 / (32.0 * 32.0));
    const double e1 = max_lambda_error(m, exact, 1e-2);
    const double e2 = max_lambda_error(sample_metric(2, 65, identity2, a, one), exact, 1e-2);
    CHECK(std::log2(e1 / e2) >= 1.9);
    CHECK(pullback_error(m, d, 200) <= 1e-6);
  }
  SUBCASE("2D y dx is not diagonalizable") {
    auto a = [](const Point& x) { return std::vector<double>{x[1], 0.0}; };
    const auto d = is_diagonalizable(sample_metric(2, 9, identity2, a, one));
    CHECK_FALSE(d.diagonalizable);
    CHECK(d.max_curl == doctest::Approx(1.0));
    CHECK_FALSE(d.lambda.has_value());
  }
  SUBCASE("derivative of lambda") {
    auto a = [](const Point& x) { return std::vector<double>{0.4 + x[0]}; };
    auto b = [](const Point& x) { return std::vector<double>{1.0 + x[0] * x[0]}; };
    const auto m = sample_metric(1, 401, one, a, b);
    const auto d = is_diagonalizable(m);
    const auto& l = *d.lambda;
    const double h = m.grid().spacing(0);
    for (std::size_t i = 1; i + 1 < l.size(); i += 40) {
      const double fd = (l[i + 1] - l[i - 1]) / (2 * h);
      CHECK(fd == doctest::Approx(l[i] * m.a()[i] / (2 * m.b()[i])).epsilon(1e-4));
    }
    CHECK(pullback_error(m, d, 200) <= 1e-12);
  }
}

TEST_CASE("cone curvature") {
  CHECK(cone_sectional_curvature(1.0, 3.0) == 0.0);
  CHECK(cone_sectional_curvature(0.0, 2.0) == doctest::Approx(-0.25));
  CHECK(cone_sectional_curvature(2.0, 0.5) == doctest::Approx(4.0));
  CHECK_THROWS_AS(cone_sectional_curvature(1.0, 0.0), Error);
}

TEST_CASE("horizontal lift") {
  SUBCASE("constant tangent on a constant density") {
    const auto lift = horizontal_lift(uniform_density(16, 2.0), std::vector<double>(16, 3.0), 0.5);
    for (double p : lift.phi) CHECK(p == doctest::Approx(0.25 * 3.0 / 2.0));
    for (double v : lift.velocity) CHECK(std::abs(v) <= 1e-12);
  }
  SUBCASE("zero tangent") {
    const auto lift = horizontal_lift(uniform_density(8), std::vector<double>(8, 0.0));
    for (double p : lift.phi) CHECK(p == 0.0);
  }
  SUBCASE("cosine eigenfunction") {
    double err[3];
    int k = 0;
    for (int n : {64, 128, 256}) {
      const auto x = cosine(n);
      const auto lift = horizontal_lift(uniform_density(n), x, 1.0);
      double norm = 0.0;
      for (double v : x) norm += v * v;
      CHECK(lift.residual <= 1e-10 * std::sqrt(norm));
      const double pi2 = std::numbers::pi * std::numbers::pi;
      err[k] = 0.0;
      for (int i = 0; i < n; ++i) err[k] = std::max(err[k], std::abs(lift.phi[i] - x[i] / (pi2 + 1.0)));
      ++k;
    }
    CHECK(std::log2(err[0] / err[1]) >= 1.9);
    CHECK(std::log2(err[1] / err[2]) >= 1.9);
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 2.0);
    GridDensity rho{DomainBox::unit(1), {32}, {}};
    for (int i = 0; i < 32; ++i) rho.values.push_back(pos(rng) / 32);
    std::vector<double> x(32), y(32), z(32);
    for (int i = 0; i < 32; ++i) x[i] = u(rng), y[i] = u(rng), z[i] = 2 * x[i] - 3 * y[i];
    const auto lx = horizontal_lift(rho, x, 0.7), ly = horizontal_lift(rho, y, 0.7), lz = horizontal_lift(rho, z, 0.7);
    for (int i = 0; i < 32; ++i) CHECK(lz.phi[i] == doctest::Approx(2 * lx.phi[i] - 3 * ly.phi[i]).scale(1.0));
  }
  SUBCASE("errors") {
    GridDensity bad = uniform_density(4);
    bad.values[2] = 0.0;
    CHECK_THROWS_AS(horizontal_lift(bad, std::vector<double>(4, 1.0)), Error);
    CHECK_THROWS_AS(horizontal_lift(uniform_density(4), std::vector<double>(3, 1.0)), Error);
    CHECK_THROWS_AS(horizontal_lift(uniform_density(4), std::vector<double>(4, 1.0), 0.0), Error);
  }
}

TEST_CASE("tangent norm") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0), pos(0.5, 2.0);
  GridDensity rho{DomainBox::unit(1), {40}, {}};
  for (int i = 0; i < 40; ++i) rho.values.push_back(pos(rng) / 40);
  std::vector<double> x(40);
  for (double& v : x) v = u(rng);
  const double delta = 0.8;

  const auto norm = wf_tangent_norm(rho, x, delta);
  CHECK(norm.duality == doctest::Approx(norm.energy).epsilon(1e-12));
  CHECK(norm.energy > 0.0);

  SUBCASE("homogeneity") {
    std::vector<double> x2(x);
    for (double& v : x2) v *= 3.0;
    CHECK(wf_tangent_norm(rho, x2, delta).energy == doctest::Approx(9.0 * norm.energy).epsilon(1e-12));
    GridDensity rho2 = rho;
    for (double& v : rho2.values) v *= 2.0;
    CHECK(wf_tangent_norm(rho2, x, delta).energy == doctest::Approx(0.5 * norm.energy).epsilon(1e-12));
  }
  SUBCASE("the lift minimizes energy among admissible pairs") {
    const auto lift = horizontal_lift(rho, x, delta);
    const auto c = lift_constraint(rho, lift.velocity, lift.growth);
    for (int i = 0; i < 40; ++i) CHECK(c[i] == doctest::Approx(x[i]).scale(1.0).epsilon(1e-10));
    const double h = rho.cell_width(0);
    for (int trial = 0; trial < 50; ++trial) {
      // Perturb v and repair alpha cell by cell so the constraint still holds.
      std::vector<double> v(lift.velocity);
      for (double& w : v) w += 0.3 * u(rng);
      const auto flux_only = lift_constraint(rho, v, std::vector<double>(40, 0.0));
      std::vector<double> alpha(40);
      for (int i = 0; i < 40; ++i) alpha[i] = (x[i] - flux_only[i]) / (rho.values[i] / h);
      const auto check = lift_constraint(rho, v, alpha);
      for (int i = 0; i < 40; ++i) REQUIRE(check[i] == doctest::Approx(x[i]).scale(1.0).epsilon(1e-10));
      CHECK(lift_energy(rho, v, alpha, delta) >= norm.energy - 1e-12);
    }
  }
  SUBCASE("pure growth competitor") {
    // With v = 0 the constraint forces alpha = X / rho.
    std::vector<double> alpha(40);
    const double h = rho.cell_width(0);
    for (int i = 0; i < 40; ++i) alpha[i] = x[i] / (rho.values[i] / h);
    CHECK(lift_energy(rho, std::vector<double>(39, 0.0), alpha, delta) >= norm.energy);
  }
}

TEST_CASE("metric json") {
  const nlohmann::json j = {{"grid", {{"lower", {0.0}}, {"upper", {1.0}}, {"points", {3}}}},
                            {"g", {1.0, 1.0, 1.0}},
                            {"a", {0.0, 0.1, 0.2}},
                            {"b", {1.0, 1.0, 1.0}}};
  const auto m = metric_from_json(j);
  CHECK(m.a()[2] == 0.2);
  const auto out = diagonalization_to_json(is_diagonalizable(m));
  CHECK(out["diagonalizable"] == true);
  CHECK(out["lambda"].size() == 3);
  auto broken = j;
  broken.erase("b");
  CHECK_THROWS_AS(metric_from_json(broken), Error);
  broken = j;
  broken["grid"]["points"] = {1};
  CHECK_THROWS_AS(metric_from_json(broken), Error);
  CHECK_THROWS_AS(metric_from_json(nlohmann::json::array()), Error);
}
