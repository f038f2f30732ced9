#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "uot/measures.hpp"

using namespace uot;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("uot_measures_" + name);
}

}  // namespace

TEST_CASE("construction and total mass") {
  const DiscreteMeasure m({{0.0}, {1.0}}, {1.0, 2.0}, DomainBox::unit(1));
  CHECK(m.total_mass() == 3.0);
  CHECK(total_mass(m) == 3.0);
  CHECK(DiscreteMeasure({{0.5}}, {0.0}, DomainBox::unit(1)).total_mass() == 0.0);
  CHECK(DiscreteMeasure({}, {}, DomainBox::unit(1)).total_mass() == 0.0);
  CHECK(DiscreteMeasure({{0.1}, {0.2}}, {0.25, 0.75}, DomainBox::unit(1)).total_mass() == 1.0);
  CHECK(m.scaled(0.5).total_mass() == doctest::Approx(1.5));
  CHECK(m.scaled(0.5).points() == m.points());
}

TEST_CASE("construction errors") {
  CHECK(code_of([] { DiscreteMeasure({{0.5}}, {-1.0}, DomainBox::unit(1)); }) == ErrorCode::kNegativeMass);
  CHECK(code_of([] { DiscreteMeasure({{1.5}}, {1.0}, DomainBox::unit(1)); }) == ErrorCode::kPointOutsideDomain);
  CHECK(code_of([] { DiscreteMeasure({{0.5}, {0.2}}, {1.0}, DomainBox::unit(1)); }) == ErrorCode::kLengthMismatch);
  CHECK(code_of([] { DomainBox({0.0}, {0.0}); }) == ErrorCode::kInvalidDomain);
  CHECK(code_of([] { DomainBox({0.0, 0.0}, {1.0}); }) == ErrorCode::kInvalidDomain);
  CHECK(code_of([] { DiscreteMeasure({{0.5, 0.5}}, {1.0}, DomainBox::unit(1)); }) != ErrorCode::kNegativeMass);
}

TEST_CASE("distance is euclidean") {
  CHECK(distance({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(5.0));
  CHECK(distance({0.25}, {0.75}) == doctest::Approx(0.5));
}

TEST_CASE("rasterize deposits each atom in its cell") {
  const int four[] = {4};
  SUBCASE("dirac at the box center") {
    const auto g = rasterize(DiscreteMeasure({{0.5}}, {1.0}, DomainBox::unit(1)), four);
    CHECK(g.values == std::vector<double>{0.0, 0.0, 1.0, 0.0});
  }
  SUBCASE("zero measure") {
    const auto g = rasterize(DiscreteMeasure({}, {}, DomainBox::unit(1)), four);
    CHECK(g.values == std::vector<double>(4, 0.0));
  }
  SUBCASE("two atoms in one cell add up") {
    const auto g = rasterize(DiscreteMeasure({{0.3}, {0.4}}, {1.0, 2.0}, DomainBox::unit(1)), four);
    CHECK(g.values[1] == 3.0);
    CHECK(g.total_mass() == 3.0);
  }
  SUBCASE("2D indexing and the upper boundary") {
    const int cells[] = {2, 3};
    const auto g = rasterize(DiscreteMeasure({{0.9, 0.5}, {1.0, 1.0}}, {1.0, 2.0}, DomainBox::unit(2)), cells);
    CHECK(g.cell_count() == 6);
    CHECK(g.values[1 + 2 * 1] == 1.0);
    CHECK(g.values[1 + 2 * 2] == 2.0);
    CHECK(g.cell_volume() == doctest::Approx(1.0 / 6.0));
    CHECK(g.cell_center(1 + 2 * 2)[1] == doctest::Approx(5.0 / 6.0));
  }
  SUBCASE("mass is conserved exactly") {
    std::vector<Point> pts;
    std::vector<double> ms;
    for (int i = 0; i < 100; ++i) {
      pts.push_back({std::fmod(0.37 * i, 1.0), std::fmod(0.61 * i, 1.0)});
      ms.push_back(0.01 * (i % 7 + 1));
    }
    const DiscreteMeasure m(pts, ms, DomainBox::unit(2));
    const int cells[] = {7, 5};
    CHECK(rasterize(m, cells).total_mass() == doctest::Approx(m.total_mass()).epsilon(1e-15));
  }
  const int bad[] = {0};
  CHECK_THROWS_AS(rasterize(DiscreteMeasure({}, {}, DomainBox::unit(1)), bad), Error);
}

TEST_CASE("json and csv round trips") {
  const DiscreteMeasure m({{0.1, 0.2}, {0.7, 0.9}}, {0.5, 1.25}, DomainBox({0.0, 0.0}, {1.0, 2.0}));
  CHECK(measure_from_json(measure_to_json(m)) == m);

  const auto json_path = temp_path("m.json");
  save_measure(m, json_path.string());
  CHECK(load_measure(json_path.string()) == m);

  const auto csv_path = temp_path("m.csv");
  save_measure(m, csv_path.string());
  CHECK(format_from_path(csv_path.string()) == MeasureFormat::kCsv);
  CHECK(load_measure(csv_path.string(), m.domain()) == m);

  // Without a domain, CSV measures live on the unit box.
  const auto unit = measure_from_csv("x1,mass\n0.25,1\n0.5,2\n");
  CHECK(unit.domain() == DomainBox::unit(1));
  CHECK(unit.total_mass() == 3.0);

  std::filesystem::remove(json_path);
  std::filesystem::remove(csv_path);
}

TEST_CASE("malformed inputs are parse errors") {
  CHECK(code_of([] { measure_from_csv("x1,mass\n0.25,abc\n"); }) == ErrorCode::kParseError);
  CHECK(code_of([] { measure_from_csv("x,weight\n0.25,1\n"); }) == ErrorCode::kParseError);
  auto j = measure_to_json(DiscreteMeasure({{0.5}}, {1.0}, DomainBox::unit(1)));
  j["masses"] = "heavy";
  CHECK(code_of([&] { measure_from_json(j); }) == ErrorCode::kParseError);
  j.erase("masses");
  CHECK(code_of([&] { measure_from_json(j); }) == ErrorCode::kParseError);
  CHECK(code_of([] { load_measure("/nonexistent/measure.json"); }) == ErrorCode::kParseError);
  const auto bad = temp_path("bad.json");
  std::ofstream(bad) << "{ not json";
  CHECK(code_of([&] { load_measure(bad.string()); }) == ErrorCode::kParseError);
  std::filesystem::remove(bad);
}
