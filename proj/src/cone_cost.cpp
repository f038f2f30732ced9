#include "uot/cone_cost.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace uot {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

void check_masses(double m0, double m1) {
  if (m0 < 0.0 || m1 < 0.0 || std::isnan(m0) || std::isnan(m1)) {
    throw Error(ErrorCode::kNegativeMass, fmt::format("masses ({}, {}) must be nonnegative", m0, m1));
  }
}

double sq(double v) { return v * v; }

// Root of t - d + (f(t) - s) f'(t) with f(t) = sqrt(t^2 + 2k), d > 0, bracketed
// on [lo, d]. This is the stationarity condition for the projection of (s, d)
// onto the epigraph {s >= f(t)}.
double epigraph_root(double s, double d, double k) {
  const double two_k = 2.0 * k;
  double lo = s > std::sqrt(two_k) ? std::sqrt(std::max(0.0, s * s - two_k)) : 0.0;
  double hi = d;
  auto residual = [&](double t) {
    const double f = std::sqrt(t * t + two_k);
    return t - d + (f - s) * t / f;
  };
  double t = 0.5 * (lo + hi);
  for (int iter = 0; iter < 100; ++iter) {
    const double f = std::sqrt(t * t + two_k);
    const double r = t - d + (f - s) * t / f;
    if (r > 0.0) {
      hi = t;
    } else {
      lo = t;
    }
    if (hi - lo <= 1e-16 * std::max(1.0, std::abs(d)) || r == 0.0) return t;
    // d/dt [(f - s) t / f] = t^2 / f^2 + (f - s) * 2k / f^3
    const double dr = 1.0 + t * t / (f * f) + (f - s) * two_k / (f * f * f);
    double next = dr > 0.0 ? t - r / dr : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(1.0, std::abs(t))) {
      return std::abs(residual(next)) < std::abs(r) ? next : t;
    }
    t = next;
  }
  throw Error(ErrorCode::kNoConvergence, "WF dual-set projection: Newton exceeded 100 iterations");
}

DualSetPoint project_wf(double k, double a, double b) {
  if (k <= 0.0) return {std::min(a, 1.0), std::min(b, 1.0)};
  const double p = 1.0 - a;
  const double q = 1.0 - b;
  const double s = (p + q) / std::numbers::sqrt2;
  const double d = (p - q) / std::numbers::sqrt2;
  double t = 0.0;
  if (d > 0.0) {
    t = epigraph_root(s, d, k);
  } else if (d < 0.0) {
    t = -epigraph_root(s, -d, k);
  }
  const double f = std::sqrt(t * t + 2.0 * k);
  const double pp = (f + t) / std::numbers::sqrt2;
  const double qq = (f - t) / std::numbers::sqrt2;
  return {1.0 - pp, 1.0 - qq};
}

DualSetPoint nearest_on_segment(double a, double b, double a0, double b0, double da, double db,
                                double tmin, double tmax) {
  const double t = std::clamp(((a - a0) * da + (b - b0) * db) / (da * da + db * db), tmin, tmax);
  return {a0 + t * da, b0 + t * db};
}

// Q = {a <= delta, b <= delta, a + b <= bound}.
DualSetPoint project_partial(double delta, double bound, double a, double b) {
  const DualSetPoint boxed{std::min(a, delta), std::min(b, delta)};
  if (boxed.a + boxed.b <= bound) return boxed;
  const double shift = 0.5 * (a + b - bound);
  const DualSetPoint on_line{a - shift, b - shift};
  if (on_line.a <= delta && on_line.b <= delta) return on_line;
  // Remaining boundary pieces: the two rays a = delta, b = delta below the
  // corner and the segment of a + b = bound between them.
  const double corner = bound - delta;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const std::array<DualSetPoint, 3> candidates = {
      nearest_on_segment(a, b, delta, corner, 0.0, -1.0, 0.0, kInf),
      nearest_on_segment(a, b, corner, delta, -1.0, 0.0, 0.0, kInf),
      nearest_on_segment(a, b, corner, delta, 1.0, -1.0, 0.0, std::max(0.0, delta - corner)),
  };
  DualSetPoint best = candidates[0];
  double best_d = kInf;
  for (const auto& c : candidates) {
    const double dd = sq(c.a - a) + sq(c.b - b);
    if (dd < best_d) {
      best_d = dd;
      best = c;
    }
  }
  return best;
}

}  // namespace

const char* to_string(CostKind kind) {
  switch (kind) {
    case CostKind::kWF: return "wf";
    case CostKind::kPartial: return "partial";
    case CostKind::kClassical: return "classical";
  }
  return "unknown";
}

CostFunction CostFunction::wf(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  }
  return CostFunction(CostKind::kWF, delta, 2);
}

CostFunction CostFunction::partial(double delta, int p) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw Error(ErrorCode::kInvalidArgument, "delta must be positive");
  }
  if (p < 1) throw Error(ErrorCode::kInvalidArgument, "p must be >= 1");
  return CostFunction(CostKind::kPartial, delta, p);
}

CostFunction CostFunction::classical(int p) {
  if (p < 1) throw Error(ErrorCode::kInvalidArgument, "p must be >= 1");
  return CostFunction(CostKind::kClassical, 1.0, p);
}

double CostFunction::metric_exponent() const {
  return kind_ == CostKind::kWF ? 2.0 : static_cast<double>(p_);
}

double CostFunction::dual_scale() const {
  return kind_ == CostKind::kWF ? 2.0 * delta_ * delta_ : 1.0;
}

double CostFunction::transport_bound(double dist) const {
  return std::pow(dist, p_) / p_;
}

double CostFunction::evaluate(const Point& x0, double m0, const Point& x1, double m1) const {
  return evaluate_at_distance(distance(x0, x1), m0, m1);
}

double CostFunction::evaluate_at_distance(double dist, double m0, double m1) const {
  check_masses(m0, m1);
  switch (kind_) {
    case CostKind::kWF: {
      const double c = truncated_cos(dist / (2.0 * delta_));
      return std::max(0.0, 2.0 * delta_ * delta_ * (m0 + m1 - 2.0 * std::sqrt(m0 * m1) * c));
    }
    case CostKind::kPartial:
      return std::min(transport_bound(dist), 2.0 * delta_) * std::min(m0, m1) +
             delta_ * std::abs(m1 - m0);
    case CostKind::kClassical:
      if (m0 != m1) return kInfiniteCost;
      return m0 == 0.0 ? 0.0 : transport_bound(dist) * m0;
  }
  return kInfiniteCost;
}

double CostFunction::apex_cost() const {
  switch (kind_) {
    case CostKind::kWF: return 2.0 * delta_ * delta_;
    case CostKind::kPartial: return delta_;
    case CostKind::kClassical: return kInfiniteCost;
  }
  return kInfiniteCost;
}

bool CostFunction::in_dual_set(double dist, double a, double b, double slack) const {
  switch (kind_) {
    case CostKind::kWF: {
      if (a > 1.0 + slack || b > 1.0 + slack) return false;
      const double k = sq(truncated_cos(dist / (2.0 * delta_)));
      return (1.0 - std::min(a, 1.0)) * (1.0 - std::min(b, 1.0)) >= k - slack;
    }
    case CostKind::kPartial:
      return a <= delta_ + slack && b <= delta_ + slack && a + b <= transport_bound(dist) + slack;
    case CostKind::kClassical:
      return a + b <= transport_bound(dist) + slack;
  }
  return false;
}

DualSetPoint CostFunction::project_dual_set(double dist, double a, double b) const {
  if (in_dual_set(dist, a, b)) return {a, b};
  switch (kind_) {
    case CostKind::kWF:
      return project_wf(sq(truncated_cos(dist / (2.0 * delta_))), a, b);
    case CostKind::kPartial:
      return project_partial(delta_, transport_bound(dist), a, b);
    case CostKind::kClassical: {
      const double shift = 0.5 * (a + b - transport_bound(dist));
      return {a - shift, b - shift};
    }
  }
  return {a, b};
}

double CostFunction::max_partner(double dist, double b) const {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  switch (kind_) {
    case CostKind::kWF: {
      const double k = sq(truncated_cos(dist / (2.0 * delta_)));
      if (b > 1.0) return kNegInf;
      if (b == 1.0) return k == 0.0 ? 1.0 : kNegInf;
      return 1.0 - k / (1.0 - b);
    }
    case CostKind::kPartial:
      if (b > delta_) return kNegInf;
      return std::min(delta_, transport_bound(dist) - b);
    case CostKind::kClassical:
      return transport_bound(dist) - b;
  }
  return kNegInf;
}

nlohmann::json cost_to_json(const CostFunction& cost) {
  nlohmann::json j;
  j["kind"] = to_string(cost.kind());
  if (cost.kind() != CostKind::kClassical) j["delta"] = cost.delta();
  if (cost.kind() != CostKind::kWF) j["p"] = cost.p();
  return j;
}

CostFunction cost_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw Error(ErrorCode::kParseError, "cost needs a string field 'kind'");
  }
  const std::string kind = j.at("kind").get<std::string>();
  auto number = [&](const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw Error(ErrorCode::kParseError, fmt::format("cost.{} must be a number", key));
    return j.at(key).get<double>();
  };
  auto integer = [&](const char* key, int fallback) {
    const double v = number(key, fallback);
    if (v != std::floor(v)) throw Error(ErrorCode::kParseError, fmt::format("cost.{} must be an integer", key));
    return static_cast<int>(v);
  };
  if (kind == "wf") return CostFunction::wf(number("delta", 1.0));
  if (kind == "partial") return CostFunction::partial(number("delta", 1.0), integer("p", 2));
  if (kind == "classical") return CostFunction::classical(integer("p", 2));
  throw Error(ErrorCode::kParseError, fmt::format("unknown cost kind '{}'", kind));
}

double truncated_cos(double z) { return std::cos(std::min(std::abs(z), kHalfPi)); }

double wf_cost(const Point& x0, double m0, const Point& x1, double m1, double delta) {
  return CostFunction::wf(delta).evaluate(x0, m0, x1, m1);
}

double partial_ot_cost(const Point& x0, double m0, const Point& x1, double m1, double delta, int p) {
  return CostFunction::partial(delta, p).evaluate(x0, m0, x1, m1);
}

double cone_distance(double m0, double m1, double base_distance) {
  check_masses(m0, m1);
  const double c = std::cos(std::min(base_distance, std::numbers::pi));
  return std::sqrt(std::max(0.0, m0 + m1 - 2.0 * std::sqrt(m0 * m1) * c));
}

bool in_Q(const CostFunction& cost, const Point& x0, const Point& x1, double a, double b, double slack) {
  return cost.in_dual_set(distance(x0, x1), a, b, slack);
}

DualSetPoint project_Q(const CostFunction& cost, const Point& x0, const Point& x1, double a, double b) {
  return cost.project_dual_set(distance(x0, x1), a, b);
}

namespace {

template <typename F>
double golden_section(F&& f, double lo, double hi, int iterations = 80) {
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int i = 0; i < iterations && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

}  // namespace

double two_chunk_regularize(const PathCost& path_cost, const Point& x0, double m0, const Point& x1,
                            double m1, int resolution) {
  check_masses(m0, m1);
  if (resolution < 1) throw Error(ErrorCode::kInvalidArgument, "resolution must be positive");
  auto split = [&](double a0, double a1) {
    a0 = std::clamp(a0, 0.0, m0);
    a1 = std::clamp(a1, 0.0, m1);
    return path_cost(x0, a0, x1, a1) + path_cost(x0, m0 - a0, x1, m1 - a1);
  };
  double best = split(m0, m1);
  double best0 = m0;
  double best1 = m1;
  for (int i = 0; i <= resolution; ++i) {
    const double a0 = m0 * i / resolution;
    for (int j = 0; j <= resolution; ++j) {
      const double a1 = m1 * j / resolution;
      const double v = split(a0, a1);
      if (v < best) {
        best = v;
        best0 = a0;
        best1 = a1;
      }
    }
  }
  const double h0 = m0 / resolution;
  const double h1 = m1 / resolution;
  for (int sweep = 0; sweep < 4; ++sweep) {
    if (h0 > 0.0) {
      const double c0 = golden_section([&](double t) { return split(t, best1); },
                                       std::max(0.0, best0 - h0), std::min(m0, best0 + h0));
      if (split(c0, best1) < best) {
        best0 = c0;
        best = split(best0, best1);
      }
    }
    if (h1 > 0.0) {
      const double c1 = golden_section([&](double t) { return split(best0, t); },
                                       std::max(0.0, best1 - h1), std::min(m1, best1 + h1));
      if (split(best0, c1) < best) {
        best1 = c1;
        best = split(best0, best1);
      }
    }
  }
  return best;
}

}  // namespace uot
