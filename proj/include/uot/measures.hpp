#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uot/error.hpp"

namespace uot {

// Coordinates of a point in R^d, d in {1, 2}.
using Point = std::vector<double>;

double distance(const Point& a, const Point& b);

// Axis-aligned box Omega = prod_k [lower_k, upper_k].
class DomainBox {
 public:
  DomainBox() = default;
  DomainBox(std::vector<double> lower, std::vector<double> upper);

  static DomainBox unit(int dimension);

  int dimension() const { return static_cast<int>(lower_.size()); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  double extent(int axis) const { return upper_[axis] - lower_[axis]; }
  bool contains(const Point& p) const;

  bool operator==(const DomainBox&) const = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

// Weighted point cloud with nonnegative masses. Zero-mass atoms are kept.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  DiscreteMeasure(std::vector<Point> points, std::vector<double> masses, DomainBox domain);

  std::size_t size() const { return masses_.size(); }
  bool empty() const { return masses_.empty(); }
  const std::vector<Point>& points() const { return points_; }
  const std::vector<double>& masses() const { return masses_; }
  const Point& point(std::size_t i) const { return points_[i]; }
  double mass(std::size_t i) const { return masses_[i]; }
  const DomainBox& domain() const { return domain_; }
  int dimension() const { return domain_.dimension(); }

  double total_mass() const;

  // Same atoms with every mass multiplied by `factor` (>= 0).
  DiscreteMeasure scaled(double factor) const;

  bool operator==(const DiscreteMeasure&) const = default;

 private:
  std::vector<Point> points_;
  std::vector<double> masses_;
  DomainBox domain_;
};

DiscreteMeasure new_discrete_measure(std::vector<Point> points, std::vector<double> masses,
                                     DomainBox domain);
double total_mass(const DiscreteMeasure& measure);

// Cell-averaged carrier for the dynamic solver. Values are mass per cell;
// index = i0 + cells[0] * i1.
struct GridDensity {
  DomainBox domain;
  std::vector<int> cells;
  std::vector<double> values;

  std::size_t cell_count() const;
  double cell_width(int axis) const { return domain.extent(axis) / cells[axis]; }
  double cell_volume() const;
  Point cell_center(std::size_t index) const;
  double total_mass() const;
};

// Nearest-cell deposition; exact in total mass.
GridDensity rasterize(const DiscreteMeasure& measure, std::span<const int> cells);

enum class MeasureFormat { kJson, kCsv };

MeasureFormat format_from_path(const std::string& path);

nlohmann::json measure_to_json(const DiscreteMeasure& measure);
DiscreteMeasure measure_from_json(const nlohmann::json& j);

std::string measure_to_csv(const DiscreteMeasure& measure);
// CSV carries no domain; `domain` defaults to the unit box of the detected dimension.
DiscreteMeasure measure_from_csv(const std::string& text,
                                 const std::optional<DomainBox>& domain = std::nullopt);

DiscreteMeasure load_measure(const std::string& path,
                             const std::optional<DomainBox>& csv_domain = std::nullopt);
void save_measure(const DiscreteMeasure& measure, const std::string& path);

}  // namespace uot
