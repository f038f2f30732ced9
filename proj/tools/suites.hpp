#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uot/static_solver.hpp"

namespace uot::cli {

struct SuiteOptions {
  std::uint64_t seed = 1;
  int count = 20;
  int workers = 1;
  double tolerance = 0.0;  // 0 keeps the suite default
  int max_iterations = 0;
};

struct InstanceOutcome {
  bool passed = false;
  double slack = 0.0;  // suite-specific margin, negative when the check failed
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  int passed = 0;
  int failed = 0;
  double worst_slack = 0.0;
  std::vector<InstanceOutcome> outcomes;
};

// Suites: metric, duality, equivalence, continuity. Throws Error(kInvalidArgument)
// for an unknown name. Instance k draws from a generator seeded by (seed, k), so
// the report does not depend on the worker count.
SuiteReport run_suite(const std::string& suite, const SuiteOptions& options);

}  // namespace uot::cli
