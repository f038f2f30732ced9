#include "uot/measures.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace uot {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNegativeMass: return "NegativeMass";
    case ErrorCode::kPointOutsideDomain: return "PointOutsideDomain";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidDomain: return "InvalidDomain";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDomainMismatch: return "DomainMismatch";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNonpositiveMass: return "NonpositiveMass";
    case ErrorCode::kNonpositiveDensity: return "NonpositiveDensity";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInfeasible: return "Infeasible";
  }
  return "Unknown";
}

double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

DomainBox::DomainBox(std::vector<double> lower, std::vector<double> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) {
    throw Error(ErrorCode::kInvalidDomain, "lower/upper corner dimensions differ");
  }
  if (lower_.empty() || lower_.size() > 2) {
    throw Error(ErrorCode::kInvalidDomain,
                fmt::format("dimension must be 1 or 2, got {}", lower_.size()));
  }
  for (std::size_t k = 0; k < lower_.size(); ++k) {
    if (!(lower_[k] < upper_[k]) || !std::isfinite(lower_[k]) || !std::isfinite(upper_[k])) {
      throw Error(ErrorCode::kInvalidDomain, fmt::format("axis {} has lower >= upper", k));
    }
  }
}

DomainBox DomainBox::unit(int dimension) {
  return DomainBox(std::vector<double>(dimension, 0.0), std::vector<double>(dimension, 1.0));
}

bool DomainBox::contains(const Point& p) const {
  if (static_cast<int>(p.size()) != dimension()) return false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= lower_[k] && p[k] <= upper_[k])) return false;
  }
  return true;
}

DiscreteMeasure::DiscreteMeasure(std::vector<Point> points, std::vector<double> masses,
                                 DomainBox domain)
    : points_(std::move(points)), masses_(std::move(masses)), domain_(std::move(domain)) {
  if (domain_.dimension() == 0) {
    throw Error(ErrorCode::kInvalidDomain, "measure requires a domain");
  }
  if (points_.size() != masses_.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                fmt::format("{} points but {} masses", points_.size(), masses_.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < masses_.size(); ++i) {
    if (masses_[i] < 0.0 || std::isnan(masses_[i])) {
      throw Error(ErrorCode::kNegativeMass, fmt::format("atom {} has mass {}", i, masses_[i]));
    }
    masses_[i] += 0.0;  // -0 -> +0
    if (!domain_.contains(points_[i])) {
      throw Error(ErrorCode::kPointOutsideDomain, fmt::format("atom {} lies outside the domain", i));
    }
    total += masses_[i];
  }
  if (!std::isfinite(total)) {
    throw Error(ErrorCode::kInvalidArgument, "total mass is not finite");
  }
}

double DiscreteMeasure::total_mass() const {
  double s = 0.0;
  for (double m : masses_) s += m;
  return s;
}

DiscreteMeasure DiscreteMeasure::scaled(double factor) const {
  std::vector<double> m = masses_;
  for (double& v : m) v *= factor;
  return DiscreteMeasure(points_, std::move(m), domain_);
}

DiscreteMeasure new_discrete_measure(std::vector<Point> points, std::vector<double> masses,
                                     DomainBox domain) {
  return DiscreteMeasure(std::move(points), std::move(masses), std::move(domain));
}

double total_mass(const DiscreteMeasure& measure) { return measure.total_mass(); }

std::size_t GridDensity::cell_count() const {
  std::size_t n = 1;
  for (int c : cells) n *= static_cast<std::size_t>(c);
  return n;
}

double GridDensity::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < domain.dimension(); ++k) v *= cell_width(k);
  return v;
}

Point GridDensity::cell_center(std::size_t index) const {
  Point p(domain.dimension());
  for (int k = 0; k < domain.dimension(); ++k) {
    const std::size_t ik = index % static_cast<std::size_t>(cells[k]);
    index /= static_cast<std::size_t>(cells[k]);
    p[k] = domain.lower()[k] + (static_cast<double>(ik) + 0.5) * cell_width(k);
  }
  return p;
}

double GridDensity::total_mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

GridDensity rasterize(const DiscreteMeasure& measure, std::span<const int> cells) {
  const DomainBox& box = measure.domain();
  if (static_cast<int>(cells.size()) != box.dimension()) {
    throw Error(ErrorCode::kLengthMismatch, "cell counts do not match the domain dimension");
  }
  GridDensity grid{box, std::vector<int>(cells.begin(), cells.end()), {}};
  for (int c : grid.cells) {
    if (c <= 0) throw Error(ErrorCode::kInvalidArgument, "cell counts must be positive");
  }
  grid.values.assign(grid.cell_count(), 0.0);
  for (std::size_t a = 0; a < measure.size(); ++a) {
    std::size_t index = 0;
    std::size_t stride = 1;
    for (int k = 0; k < box.dimension(); ++k) {
      const double t = (measure.point(a)[k] - box.lower()[k]) / grid.cell_width(k);
      const int ik = std::clamp(static_cast<int>(std::floor(t)), 0, grid.cells[k] - 1);
      index += stride * static_cast<std::size_t>(ik);
      stride *= static_cast<std::size_t>(grid.cells[k]);
    }
    grid.values[index] += measure.mass(a);
  }
  return grid;
}

MeasureFormat format_from_path(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos) {
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == "csv") return MeasureFormat::kCsv;
  }
  return MeasureFormat::kJson;
}

nlohmann::json measure_to_json(const DiscreteMeasure& measure) {
  nlohmann::json j;
  j["domain"] = {{"lower", measure.domain().lower()}, {"upper", measure.domain().upper()}};
  j["points"] = measure.points();
  j["masses"] = measure.masses();
  return j;
}

namespace {

std::vector<double> json_numbers(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) throw Error(ErrorCode::kParseError, fmt::format("field '{}' must be an array", field));
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::kParseError, fmt::format("field '{}[{}]' is not a number", field, i));
    }
    out.push_back(j[i].get<double>());
  }
  return out;
}

}  // namespace

DiscreteMeasure measure_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "measure must be a JSON object");
  for (const char* key : {"domain", "points", "masses"}) {
    if (!j.contains(key)) throw Error(ErrorCode::kParseError, fmt::format("missing field '{}'", key));
  }
  const auto& dom = j.at("domain");
  if (!dom.is_object() || !dom.contains("lower") || !dom.contains("upper")) {
    throw Error(ErrorCode::kParseError, "field 'domain' needs 'lower' and 'upper'");
  }
  DomainBox box(json_numbers(dom.at("lower"), "domain.lower"), json_numbers(dom.at("upper"), "domain.upper"));
  const auto& pts = j.at("points");
  if (!pts.is_array()) throw Error(ErrorCode::kParseError, "field 'points' must be an array");
  std::vector<Point> points;
  points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    points.push_back(json_numbers(pts[i], fmt::format("points[{}]", i)));
    if (static_cast<int>(points.back().size()) != box.dimension()) {
      throw Error(ErrorCode::kParseError, fmt::format("points[{}] has wrong dimension", i));
    }
  }
  return DiscreteMeasure(std::move(points), json_numbers(j.at("masses"), "masses"), std::move(box));
}

std::string measure_to_csv(const DiscreteMeasure& measure) {
  std::string out = measure.dimension() == 1 ? "x1,mass\n" : "x1,x2,mass\n";
  for (std::size_t i = 0; i < measure.size(); ++i) {
    for (double c : measure.point(i)) out += fmt::format("{:.17g},", c);
    out += fmt::format("{:.17g}\n", measure.mass(i));
  }
  return out;
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_field(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::kParseError,
                fmt::format("line {}, field '{}': cannot parse '{}' as a number", line, column, s));
  }
  return v;
}

}  // namespace

DiscreteMeasure measure_from_csv(const std::string& text, const std::optional<DomainBox>& domain) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      header = split_row(line);
      break;
    }
  }
  if (header.size() < 2 || header.size() > 3 || header.back() != "mass") {
    throw Error(ErrorCode::kParseError, "header must be 'x1,mass' or 'x1,x2,mass'");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  for (int k = 0; k < dim; ++k) {
    if (header[k] != fmt::format("x{}", k + 1)) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: unexpected column '{}'", lineno, header[k]));
    }
  }
  std::vector<Point> points;
  std::vector<double> masses;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_row(line);
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParseError,
                  fmt::format("line {}: expected {} fields, got {}", lineno, header.size(), fields.size()));
    }
    Point p(dim);
    for (int k = 0; k < dim; ++k) p[k] = parse_field(fields[k], lineno, header[k]);
    points.push_back(std::move(p));
    masses.push_back(parse_field(fields[dim], lineno, "mass"));
  }
  return DiscreteMeasure(std::move(points), std::move(masses), domain.value_or(DomainBox::unit(dim)));
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParseError, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

DiscreteMeasure load_measure(const std::string& path, const std::optional<DomainBox>& csv_domain) {
  const std::string text = read_file(path);
  if (format_from_path(path) == MeasureFormat::kCsv) return measure_from_csv(text, csv_domain);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: {}", path, e.what()));
  }
  return measure_from_json(j);
}

void save_measure(const DiscreteMeasure& measure, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParseError, fmt::format("cannot write '{}'", path));
  if (format_from_path(path) == MeasureFormat::kCsv) {
    f << measure_to_csv(measure);
  } else {
    f << measure_to_json(measure).dump(2) << '\n';
  }
}

}  // namespace uot
