#pragma once

#include <stdexcept>
#include <string>

namespace mhd {

/// Argument outside the domain of a constitutive function (non-positive density, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid or inconsistent run configuration / boundary data.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Step failures. Each names the invariant it protects so the CLI can emit a
// machine-readable failure record.

class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& invariant, const std::string& what)
      : std::runtime_error(what), invariant_(invariant) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

class PositivityFailure : public StepFailure {
 public:
  explicit PositivityFailure(const std::string& what) : StepFailure("positivity", what) {}
};

class SolverDivergence : public StepFailure {
 public:
  explicit SolverDivergence(const std::string& what) : StepFailure("linear_solver", what) {}
};

class CFLCollapse : public StepFailure {
 public:
  explicit CFLCollapse(const std::string& what) : StepFailure("cfl", what) {}
};

}  // namespace mhd
