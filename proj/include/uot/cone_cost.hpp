#pragma once

#include <functional>
#include <limits>

#include <json.hpp>

#include "uot/measures.hpp"

namespace uot {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

enum class CostKind { kWF, kPartial, kClassical };

const char* to_string(CostKind kind);

// A point (phi(x), psi(y)) of the dual set Q(x, y).
struct DualSetPoint {
  double a = 0.0;
  double b = 0.0;
};

// Pointwise cost c(x0, m0, x1, m1) on the product of two cones, together with
// its dual set Q(x0, x1): c(x0, ., x1, .) = scale() * support function of Q.
//
// All three families depend on the points only through |x0 - x1|. For WF the
// dual set is stored normalized (values divided by 2 delta^2) so that
// Q = {a, b <= 1, (1 - a)(1 - b) >= cosbar^2(|x0 - x1| / (2 delta))}.
class CostFunction {
 public:
  static CostFunction wf(double delta);
  static CostFunction partial(double delta, int p);
  static CostFunction classical(int p);

  CostKind kind() const { return kind_; }
  double delta() const { return delta_; }
  int p() const { return p_; }

  // Exponent q such that c^{1/q} is the metric root: 2 for WF, p otherwise.
  double metric_exponent() const;

  // Multiplier between the normalized dual set and the cost (2 delta^2 for WF).
  double dual_scale() const;

  double evaluate(const Point& x0, double m0, const Point& x1, double m1) const;
  double evaluate_at_distance(double dist, double m0, double m1) const;

  // Cost per unit mass of sending mass into (or out of) the apex: c(x, 1, ., 0).
  double apex_cost() const;

  bool in_dual_set(double dist, double a, double b, double slack = 0.0) const;
  DualSetPoint project_dual_set(double dist, double a, double b) const;

  // sup { a : (a, b) in Q } (the c-transform kernel); -inf when empty.
  double max_partner(double dist, double b) const;

  bool operator==(const CostFunction&) const = default;

 private:
  CostFunction(CostKind kind, double delta, int p) : kind_(kind), delta_(delta), p_(p) {}

  // Transport part of the dual set boundary: |x0 - x1|^p / p.
  double transport_bound(double dist) const;

  CostKind kind_ = CostKind::kWF;
  double delta_ = 1.0;
  int p_ = 2;
};

nlohmann::json cost_to_json(const CostFunction& cost);
CostFunction cost_from_json(const nlohmann::json& j);

// cos(min(|z|, pi/2)).
double truncated_cos(double z);

double wf_cost(const Point& x0, double m0, const Point& x1, double m1, double delta);
double partial_ot_cost(const Point& x0, double m0, const Point& x1, double m1, double delta, int p);

// Geodesic distance on Cone(Omega) for the metric m g + dm^2 / (4 m), where
// base_distance is the g-distance of the two base points.
double cone_distance(double m0, double m1, double base_distance);

bool in_Q(const CostFunction& cost, const Point& x0, const Point& x1, double a, double b,
          double slack = 0.0);
DualSetPoint project_Q(const CostFunction& cost, const Point& x0, const Point& x1, double a, double b);

// Path cost oracle c_s(x0, m0, x1, m1), assumed 1-homogeneous in the masses.
using PathCost = std::function<double(const Point&, double, const Point&, double)>;

// Convex regularization of a path cost: the best split of each endpoint mass
// into two chunks, searched on a resolution x resolution grid and polished by
// golden-section search.
double two_chunk_regularize(const PathCost& path_cost, const Point& x0, double m0, const Point& x1,
                            double m1, int resolution = 64);

}  // namespace uot
