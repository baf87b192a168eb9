#pragma once

#include <stdexcept>
#include <string>

namespace effham {

/// Failure categories. The CLI maps them onto process exit codes.
enum class ErrorKind {
  rejected_input,
  consistency,
  unsupported_size,
  convergence,
  solver_breakdown,
  precondition,
  property_failure,
  configuration,
  range,
  divergence,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::rejected_input: return "rejected-input";
    case ErrorKind::consistency: return "internal-consistency";
    case ErrorKind::unsupported_size: return "unsupported-size";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::solver_breakdown: return "solver-breakdown";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::property_failure: return "property-failure";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::range: return "range";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Solver failures carry a rough condition estimate of the operator involved.
class SolverBreakdown : public Error {
 public:
  SolverBreakdown(const std::string& what, double condition_estimate)
      : Error(ErrorKind::solver_breakdown,
              what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
        condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace effham
