#pragma once

#include <stdexcept>
#include <string>

namespace uot {

enum class ErrorCode {
  kNegativeMass,
  kPointOutsideDomain,
  kLengthMismatch,
  kInvalidDomain,
  kParseError,
  kDomainMismatch,
  kTooLarge,
  kNoConvergence,
  kNonpositiveMass,
  kNonpositiveDensity,
  kSingularSystem,
  kInvalidArgument,
  kInfeasible,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace uot
