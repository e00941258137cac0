#pragma once

#include <stdexcept>
#include <string>

namespace smpc {

/// Process exit codes used by the CLI and reusable by embedders.
enum class ExitCode : int {
  ok = 0,
  config_error = 2,
  insufficient_samples = 3,
  feasibility_breach = 4,
  solver_failure = 5,
};

/// Invalid or inconsistent configuration / input data.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Statistical preconditions unmet (e.g. too few samples for the
/// requested quantile rank or confidence target).
class InsufficientSamples : public std::runtime_error {
public:
  explicit InsufficientSamples(const std::string& what) : std::runtime_error(what) {}
};

/// The MPC problem became infeasible at t > 0 under the proposed
/// controller. Carries the audit dump of the shifted-candidate residuals.
class FeasibilityBreach : public std::runtime_error {
public:
  explicit FeasibilityBreach(const std::string& what) : std::runtime_error(what) {}
};

/// QP solver failed numerically (distinct from a clean infeasibility).
class SolverFailure : public std::runtime_error {
public:
  explicit SolverFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace smpc
