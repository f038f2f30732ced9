#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "uot/error.hpp"
#include "uot/linear_program.hpp"

using namespace uot;

namespace {

LinearProgram make(std::initializer_list<std::initializer_list<double>> rows, std::vector<double> b,
                   std::vector<double> c, std::vector<RowSense> senses) {
  LinearProgram lp;
  lp.A.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c.size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) lp.A(i, j++) = v;
    ++i;
  }
  lp.b = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  lp.c = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  lp.senses = std::move(senses);
  return lp;
}

}  // namespace

TEST_CASE("textbook maximization") {
  // max 3x + 5y  s.t.  x <= 4, 2y <= 12, 3x + 2y <= 18
  const auto lp = make({{1, 0}, {0, 2}, {3, 2}}, {4, 12, 18}, {-3, -5}, std::vector<RowSense>(3, RowSense::kLessEqual));
  const auto s = solve_lp(lp);
  REQUIRE(s.status == LpStatus::kOptimal);
  CHECK(s.objective == doctest::Approx(-36.0));
  CHECK(s.x[0] == doctest::Approx(2.0));
  CHECK(s.x[1] == doctest::Approx(6.0));
  CHECK(lp.b.dot(s.duals) == doctest::Approx(s.objective));
}

TEST_CASE("equality and >= rows with negative right-hand sides") {
  // min x + 2y  s.t.  x + y = 3, -x <= -1 (x >= 1), y >= 0.5
  const auto lp = make({{1, 1}, {-1, 0}, {0, 1}}, {3, -1, 0.5}, {1, 2},
                       {RowSense::kEqual, RowSense::kLessEqual, RowSense::kGreaterEqual});
  const auto s = solve_lp(lp);
  REQUIRE(s.status == LpStatus::kOptimal);
  CHECK(s.objective == doctest::Approx(2.5 + 1.0));
  CHECK(lp.b.dot(s.duals) == doctest::Approx(s.objective));
  const Eigen::VectorXd reduced = lp.c - lp.A.transpose() * s.duals;
  CHECK(reduced.minCoeff() >= -1e-9);
}

TEST_CASE("infeasible and unbounded programs") {
  const auto infeasible = make({{1}, {1}}, {2, 1}, {1}, {RowSense::kGreaterEqual, RowSense::kLessEqual});
  CHECK(solve_lp(infeasible).status == LpStatus::kInfeasible);
  const auto unbounded = make({{1, -1}}, {1}, {-1, 0}, {RowSense::kLessEqual});
  CHECK(solve_lp(unbounded).status == LpStatus::kUnbounded);
  LinearProgram bad = unbounded;
  bad.senses.clear();
  CHECK_THROWS_AS(solve_lp(bad), Error);
}

TEST_CASE("assignment problems match permutation enumeration") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 4;
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) cost(i, j) = trial % 3 == 0 ? std::round(4 * u(rng)) : u(rng);  // ties stress degeneracy
    LinearProgram lp;
    lp.A = Eigen::MatrixXd::Zero(2 * n, n * n);
    lp.b = Eigen::VectorXd::Ones(2 * n);
    lp.c.resize(n * n);
    lp.senses.assign(2 * n, RowSense::kEqual);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        lp.A(i, i * n + j) = 1;
        lp.A(n + j, i * n + j) = 1;
        lp.c[i * n + j] = cost(i, j);
      }
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double v = 0;
      for (int i = 0; i < n; ++i) v += cost(i, perm[i]);
      best = std::min(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::kOptimal);
    CHECK(s.objective == doctest::Approx(best).epsilon(1e-10));
    CHECK(lp.b.dot(s.duals) == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("degenerate epigraph program with near-zero pivot candidates") {
  const std::vector<std::pair<double, double>> x = {{0.0070860158798059375, 1.8322768247871304},
                                                    {0.94124879741733114, 0.30146960729905203}};
  const std::vector<std::pair<double, double>> y = {{0.78149268678414063, 0.33540179724781749},
                                                    {0.18150787791381418, 0.62249310215275244},
                                                    {0.67159443384285766, 1.4511954967542076},
                                                    {0.33208493197369288, 0.84652975043600454},
                                                    {0.18961152278347673, 1.2391544966201098}};
  const double delta = 0.28866928294285499;
  const int n = 2, m = 5, P = n * m;
  LinearProgram lp;
  lp.A = Eigen::MatrixXd::Zero(n + m + 2 * P, 3 * P);
  lp.b = Eigen::VectorXd::Zero(n + m + 2 * P);
  lp.c = Eigen::VectorXd::Zero(3 * P);
  lp.senses.assign(n + m + 2 * P, RowSense::kGreaterEqual);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const int p = i * m + j, r = n + m + 2 * p;
      const double k = std::min(std::pow(x[i].first - y[j].first, 2) / 2, 2 * delta);
      lp.A(i, p) = 1;
      lp.A(n + j, P + p) = 1;
      lp.A(r, 2 * P + p) = 1, lp.A(r, p) = -(k - delta), lp.A(r, P + p) = -delta;
      lp.A(r + 1, 2 * P + p) = 1, lp.A(r + 1, p) = -delta, lp.A(r + 1, P + p) = -(k - delta);
      lp.c[2 * P + p] = 1;
    }
  }
  for (int i = 0; i < n; ++i) lp.b[i] = x[i].second, lp.senses[i] = RowSense::kEqual;
  for (int j = 0; j < m; ++j) lp.b[n + j] = y[j].second, lp.senses[n + j] = RowSense::kEqual;
  const auto s = solve_lp(lp);
  REQUIRE(s.status == LpStatus::kOptimal);
  // Reference optimum from an independent LP solver.
  CHECK(s.objective == doctest::Approx(0.7150247375724346).epsilon(1e-10));
}
