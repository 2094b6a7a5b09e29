#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flatmpc {

/// Thrown when a flat state cannot be mapped to a rigid-body state or input:
/// near-zero thrust (free fall) or a degenerate yaw/thrust-axis alignment.
class SingularFlatState : public std::runtime_error {
 public:
  explicit SingularFlatState(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public std::runtime_error {
 public:
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// H + lambda*I was numerically indefinite (lambda too small for a
/// rank-deficient Jacobian).
class FactorizationFailure : public std::runtime_error {
 public:
  explicit FactorizationFailure(const std::string& what) : std::runtime_error(what) {}
};

/// The damped iteration could not decrease the cost even at the damping cap.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), cost_history(std::move(history)) {}
  std::vector<double> cost_history;
};

/// A full NMPC cycle failed; carries the last cost history so the caller can
/// decide on a fallback input.
class SolveFailure : public std::runtime_error {
 public:
  SolveFailure(const std::string& what, std::vector<double> history)
      : std::runtime_error(what), cost_history(std::move(history)) {}
  std::vector<double> cost_history;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flatmpc
