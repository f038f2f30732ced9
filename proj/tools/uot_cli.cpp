// Command-line front end: uot <command> [options]. Reports are JSON written to
// --out (or stdout). Exit codes: 0 success, 1 parse or domain error, 2 solver
// did not converge or a check failed.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "suites.hpp"
#include "uot/dynamic_solver.hpp"
#include "uot/geometry.hpp"
#include "uot/static_solver.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace uot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitSolver = 2;

struct Globals {
  double tol = 0.0;
  int max_iter = 0;
  std::uint64_t seed = 1;
  std::string out;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kParseError, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// FNV-1a over the input bytes; only used to tag reports.
std::string digest(const std::vector<std::string>& blobs) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& b : blobs) {
    for (unsigned char ch : b) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

double finite_or_max(double x) {
  if (std::isfinite(x)) return x;
  return x > 0 ? std::numeric_limits<double>::max() : std::numeric_limits<double>::lowest();
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: {}", what, e.what()));
  }
}

struct Problem {
  CostFunction cost = CostFunction::wf(1.0);
  DiscreteMeasure rho0, rho1;
  SolverConfig solver;
  DynamicConfig dynamic;
  int time_steps = 32;
  int cells = 32;
  std::vector<std::string> blobs;
};

DiscreteMeasure measure_field(const nlohmann::json& j, const fs::path& base, const char* key,
                              std::vector<std::string>& blobs) {
  if (!j.contains(key)) throw Error(ErrorCode::kParseError, fmt::format("problem has no '{}'", key));
  const auto& v = j.at(key);
  if (v.is_string()) {
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = base / p;
    blobs.push_back(read_file(p.string()));
    return load_measure(p.string());
  }
  return measure_from_json(v);
}

Problem load_problem(const std::string& path, const Globals& g) {
  Problem pb;
  const std::string text = read_file(path);
  pb.blobs.push_back(text);
  const auto j = parse_json(text, path);
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "problem file must hold an object");
  try {
    if (!j.contains("cost")) throw Error(ErrorCode::kParseError, "problem has no 'cost'");
    pb.cost = cost_from_json(j.at("cost"));
    const fs::path base = fs::path(path).parent_path();
    pb.rho0 = measure_field(j, base, "rho0", pb.blobs);
    pb.rho1 = measure_field(j, base, "rho1", pb.blobs);
    if (j.contains("solver")) pb.solver = solver_config_from_json(j.at("solver"));
    if (j.contains("dynamic")) {
      const auto& d = j.at("dynamic");
      pb.dynamic = dynamic_config_from_json(d);
      if (d.contains("time_steps")) pb.time_steps = d.at("time_steps").get<int>();
      if (d.contains("cells")) pb.cells = d.at("cells").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: {}", path, e.what()));
  }
  if (!(pb.rho0.domain() == pb.rho1.domain()))
    throw Error(ErrorCode::kDomainMismatch, "rho0 and rho1 live on different domains");
  if (g.tol > 0) pb.solver.tolerance = g.tol;
  if (g.max_iter > 0) pb.solver.max_iterations = g.max_iter;
  return pb;
}

InfinitesimalCost dynamic_cost(const CostFunction& cost) {
  if (cost.kind() == CostKind::kWF) return InfinitesimalCost::wf(cost.delta());
  if (cost.kind() == CostKind::kPartial && cost.p() == 2) return InfinitesimalCost::partial(cost.delta());
  throw Error(ErrorCode::kInvalidArgument, "dynamic mode needs a wf cost or a partial cost with p = 2");
}

void emit(const ojson& report, const std::string& out) {
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParseError, fmt::format("cannot write '{}'", out));
  f << text;
}

ojson static_json(const StaticSolution& s) {
  ojson j;
  j["primal"] = s.certificate.primal;
  j["dual"] = finite_or_max(s.certificate.dual);
  j["gap"] = finite_or_max(s.certificate.gap);
  j["relative_gap"] = finite_or_max(s.certificate.relative_gap());
  j["iterations"] = s.iterations;
  j["converged"] = s.converged();
  return j;
}

ojson dynamic_json(const DynamicSolution& s, int T, int N) {
  ojson j;
  j["time_steps"] = T;
  j["cells"] = N;
  j["primal"] = s.value;
  j["dual_estimate"] = s.dual_value;
  j["continuity_residual"] = s.residual;
  j["collocation_gap"] = s.collocation_gap;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged();
  return j;
}

ojson cost_json(const CostFunction& cost) {
  const auto j = cost_to_json(cost);
  ojson o;
  for (const char* key : {"kind", "delta", "p"}) {
    if (j.contains(key)) o[key] = ojson::parse(j.at(key).dump());
  }
  return o;
}

ojson header(const std::string& command, const std::vector<std::string>& blobs) {
  ojson j;
  j["command"] = command;
  j["inputs_digest"] = digest(blobs);
  return j;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_distance(const std::string& file, const std::string& mode, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  if (mode != "static" && mode != "dynamic" && mode != "both")
    throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown mode '{}'", mode));
  const Problem pb = load_problem(file, g);
  ojson report = header("distance", pb.blobs);
  report["cost"] = cost_json(pb.cost);
  report["mode"] = mode;
  bool ok = true;
  double ck = 0.0, cd = 0.0;
  if (mode != "dynamic") {
    const auto s = solve_static(pb.rho0, pb.rho1, pb.cost, pb.solver);
    report["static"] = static_json(s);
    ck = s.value();
    ok = ok && s.converged();
  }
  if (mode != "static") {
    const auto s = solve_dynamic(pb.rho0, pb.rho1, dynamic_cost(pb.cost), pb.time_steps, pb.cells, pb.dynamic);
    report["dynamic"] = dynamic_json(s, pb.time_steps, pb.cells);
    cd = s.value;
    ok = ok && s.converged();
  }
  if (mode == "both") report["relative_discrepancy"] = ck > 0 ? std::abs(cd - ck) / ck : std::abs(cd - ck);
  report["wall_time_s"] = seconds_since(t0);
  emit(report, g.out);
  return ok ? kExitOk : kExitSolver;
}

int cmd_gamma(const std::string& file, const std::vector<double>& deltas, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  if (deltas.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two deltas");
  for (std::size_t k = 1; k < deltas.size(); ++k)
    if (!(deltas[k] > deltas[k - 1])) throw Error(ErrorCode::kInvalidArgument, "deltas must increase");
  const Problem pb = load_problem(file, g);
  const double limit = gamma_limit_value(pb.rho0, pb.rho1);
  ojson report = header("gamma", pb.blobs);
  report["limit_value"] = limit;
  ojson rows = ojson::array();
  bool converged = true, trend = true;
  double previous = 0.0;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const auto s = solve_static(pb.rho0, pb.rho1, CostFunction::wf(deltas[k]), pb.solver);
    converged = converged && s.converged();
    const double j = gamma_functional(s.plan, deltas[k]);
    const double err = std::abs(j - limit);
    if (k >= 1 && err > previous) trend = false;
    previous = err;
    ojson row;
    row["delta"] = deltas[k];
    row["J_delta"] = j;
    row["abs_error"] = err;
    row["relative_gap"] = finite_or_max(s.certificate.relative_gap());
    row["converged"] = s.converged();
    rows.push_back(row);
  }
  report["table"] = rows;
  report["trend_non_increasing"] = trend;
  report["wall_time_s"] = seconds_since(t0);
  emit(report, g.out);
  return converged && trend ? kExitOk : kExitSolver;
}

int worker_count() {
  if (const char* env = std::getenv("UOT_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_check(const std::string& suite, int count, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  cli::SuiteOptions opts;
  opts.seed = g.seed;
  opts.count = count;
  opts.workers = worker_count();
  opts.tolerance = g.tol;
  opts.max_iterations = g.max_iter;
  const auto r = cli::run_suite(suite, opts);
  ojson report = header("check", {suite, std::to_string(count)});
  report["suite"] = suite;
  report["seed"] = g.seed;
  report["count"] = count;
  report["passed"] = r.passed;
  report["failed"] = r.failed;
  report["worst_slack"] = finite_or_max(r.worst_slack);
  ojson failures = ojson::array();
  for (std::size_t k = 0; k < r.outcomes.size(); ++k) {
    if (r.outcomes[k].passed) continue;
    failures.push_back(ojson{{"instance", k}, {"detail", r.outcomes[k].detail}});
  }
  report["failures"] = failures;
  report["wall_time_s"] = seconds_since(t0);
  emit(report, g.out);
  return r.failed == 0 ? kExitOk : kExitSolver;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kParseError, fmt::format("cannot write '{}'", path.string()));
  f << text;
}

int cmd_geodesic(const std::string& file, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  if (g.out.empty()) throw Error(ErrorCode::kInvalidArgument, "geodesic needs --out <dir>");
  const Problem pb = load_problem(file, g);
  const auto s = solve_dynamic(pb.rho0, pb.rho1, dynamic_cost(pb.cost), pb.time_steps, pb.cells, pb.dynamic);
  const fs::path dir = g.out;
  fs::create_directories(dir);

  const auto& field = s.field;
  const int T = field.time_steps();
  ojson layers = ojson::array();
  ojson masses = ojson::array();
  for (int t = 0; t <= T; ++t) {
    const std::string name = fmt::format("layer_{:03d}.csv", t);
    write_text(dir / name, layer_to_csv(field, t));
    layers.push_back(name);
    masses.push_back(field.layer_mass(t));
  }

  // Particles start at the occupied cells of the first layer.
  FlowState start;
  double peak = 0.0;
  for (std::size_t c = 0; c < field.cell_count(); ++c) peak = std::max(peak, field.rho(0, c));
  for (std::size_t c = 0; c < field.cell_count(); ++c) {
    if (field.rho(0, c) <= 1e-3 * peak) continue;
    start.positions.push_back(field.cell_center(c));
    start.masses.push_back(field.rho(0, c) * field.cell_volume());
  }
  const auto states = integrate_flow(flow_from_field(field), start, T);
  std::string traj = field.dimension() == 1 ? "step,t,particle,x1,mass\n" : "step,t,particle,x1,x2,mass\n";
  for (const auto& st : states) {
    for (std::size_t k = 0; k < st.positions.size(); ++k) {
      traj += fmt::format("{},{:.17g},{}", st.step, static_cast<double>(st.step) / T, k);
      for (double x : st.positions[k]) traj += fmt::format(",{:.17g}", x);
      traj += fmt::format(",{:.17g}\n", st.masses[k]);
    }
  }
  write_text(dir / "trajectories.csv", traj);
  write_text(dir / "field.json", field_to_json(field).dump() + "\n");

  ojson report = header("geodesic", pb.blobs);
  report["cost"] = cost_json(pb.cost);
  report["dynamic"] = dynamic_json(s, pb.time_steps, pb.cells);
  report["layer_masses"] = masses;
  report["artifacts"] = ojson{{"layers", layers}, {"trajectories", "trajectories.csv"}, {"field", "field.json"}};
  report["wall_time_s"] = seconds_since(t0);
  write_text(dir / "report.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return s.converged() ? kExitOk : kExitSolver;
}

// {"domain": {"lower": [a], "upper": [b]}, "rho": [cell masses], "x": [per unit length], "delta": 1}
int cmd_lift(const std::string& file, const std::string& csv, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string text = read_file(file);
  const auto j = parse_json(text, file);
  GridDensity rho;
  std::vector<double> x;
  double delta = 1.0;
  try {
    rho.domain = DomainBox(j.at("domain").at("lower").get<std::vector<double>>(),
                           j.at("domain").at("upper").get<std::vector<double>>());
    rho.values = j.at("rho").get<std::vector<double>>();
    rho.cells = {static_cast<int>(rho.values.size())};
    x = j.at("x").get<std::vector<double>>();
    if (j.contains("delta")) delta = j.at("delta").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, fmt::format("{}: {}", file, e.what()));
  }
  const auto lift = horizontal_lift(rho, x, delta);
  const auto norm = wf_tangent_norm(rho, x, delta);
  std::string table = "x,phi\n";
  for (std::size_t c = 0; c < lift.phi.size(); ++c)
    table += fmt::format("{:.17g},{:.17g}\n", rho.cell_center(c)[0], lift.phi[c]);
  if (csv.empty()) std::cout << table;
  else write_text(csv, table);

  ojson report = header("lift", {text});
  report["delta"] = delta;
  report["cells"] = rho.values.size();
  report["residual"] = lift.residual;
  report["tangent_norm"] = ojson{{"duality", norm.duality}, {"energy", norm.energy}};
  if (!csv.empty()) report["artifacts"] = ojson{{"csv", csv}};
  report["wall_time_s"] = seconds_since(t0);
  if (!g.out.empty() || !csv.empty()) emit(report, g.out);
  return kExitOk;
}

int cmd_metric_classify(const std::string& file, double curl_tol, const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string text = read_file(file);
  AdmissibleMetric metric = [&] {
    try {
      return metric_from_json(parse_json(text, file));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, fmt::format("{}: {}", file, e.what()));
    }
  }();
  const auto d = is_diagonalizable(metric, curl_tol);
  ojson report = header("metric-classify", {text});
  report["positive_definite"] = metric.positive_definite();
  report["diagonalization"] = ojson::parse(diagonalization_to_json(d).dump());
  if (d.diagonalizable) report["pullback_error"] = pullback_error(metric, d, 200, static_cast<unsigned>(g.seed));
  report["wall_time_s"] = seconds_since(t0);
  emit(report, g.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unbalanced optimal transport: static and dynamic solvers, checks and geometry"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--tol", g.tol, "static solver relative gap target");
  app.add_option("--max-iter", g.max_iter, "static solver iteration cap");
  app.add_option("--seed", g.seed, "seed for random suites");
  app.add_option("--out", g.out, "report path (geodesic: output directory)");

  std::string problem, mode = "static", suite, csv;
  std::vector<double> deltas{1, 2, 4, 8};
  int count = 20;
  double curl_tol = 1e-8;

  auto* distance = app.add_subcommand("distance", "C_K and/or C_D between the marginals of a problem file");
  distance->add_option("problem", problem)->required();
  distance->add_option("--mode", mode)->check(CLI::IsMember({"static", "dynamic", "both"}));
  auto* gamma = app.add_subcommand("gamma", "J_delta of optimal WF plans against the delta -> infinity limit");
  gamma->add_option("problem", problem)->required();
  gamma->add_option("--deltas", deltas)->delimiter(',');
  auto* check = app.add_subcommand("check", "randomized property suite");
  check->add_option("suite", suite)->required()->check(CLI::IsMember({"metric", "duality", "equivalence", "continuity"}));
  check->add_option("--count", count);
  auto* geodesic = app.add_subcommand("geodesic", "dynamic interpolation layers and particle trajectories");
  geodesic->add_option("problem", problem)->required();
  auto* lift = app.add_subcommand("lift", "horizontal lift of a 1D density variation");
  lift->add_option("problem", problem)->required();
  lift->add_option("--csv", csv, "write (x, phi) here instead of stdout");
  auto* classify = app.add_subcommand("metric-classify", "test an admissible metric for diagonalizability");
  classify->add_option("metric", problem)->required();
  classify->add_option("--curl-tol", curl_tol);
  for (auto* sub : {distance, gamma, check, geodesic, lift, classify}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*distance) return cmd_distance(problem, mode, g);
    if (*gamma) return cmd_gamma(problem, deltas, g);
    if (*check) return cmd_check(suite, count, g);
    if (*geodesic) return cmd_geodesic(problem, g);
    if (*lift) return cmd_lift(problem, csv, g);
    if (*classify) return cmd_metric_classify(problem, curl_tol, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kNoConvergence ? kExitSolver : kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
