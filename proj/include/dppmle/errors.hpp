#pragma once

#include <stdexcept>
#include <string>

namespace dppmle {

/// Process exit codes used by the CLI.
enum class ExitCode : int {
  success = 0,
  config_error = 2,
  budget_exceeded = 3,
  numerical_failure = 4,
};

/// Base of every error raised by the library. Each error maps to an exit code.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(what, ExitCode::config_error) {}
};

/// Ground set exceeds an enumeration or Hessian budget.
class GroundSetTooLarge : public Error {
 public:
  GroundSetTooLarge(int n, int cap);
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what)
      : Error(what, ExitCode::numerical_failure) {}
};

/// Σ_J det(L_J) and det(I+L) disagree beyond the breakdown threshold.
class NormalizationMismatch : public NumericalFailure {
 public:
  explicit NormalizationMismatch(double relative_residual);
};

/// The Fisher information is singular (reducible or near-reducible kernel).
class SingularInformation : public NumericalFailure {
 public:
  explicit SingularInformation(double smallest_eigenvalue);
};

/// A direction expected in the Hessian null space is not.
class NotNullDirection : public Error {
 public:
  explicit NotNullDirection(const std::string& what)
      : Error(what, ExitCode::config_error) {}
};

class EmptyBatch : public Error {
 public:
  EmptyBatch() : Error("sample batch is empty", ExitCode::config_error) {}
};

class InsufficientPoints : public Error {
 public:
  explicit InsufficientPoints(std::size_t count);
};

class NonpositiveValue : public Error {
 public:
  explicit NonpositiveValue(std::size_t index);
};

}  // namespace dppmle

namespace dppmle {

/// Matrix input that violates a kernel invariant (not positive definite,
/// spectrum outside (0,1), wrong shape).
class InvalidKernel : public Error {
 public:
  explicit InvalidKernel(const std::string& what)
      : Error(what, ExitCode::config_error) {}
};

}  // namespace dppmle
