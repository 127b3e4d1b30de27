#include "dppmle/errors.hpp"

#include <sstream>

namespace dppmle {

GroundSetTooLarge::GroundSetTooLarge(int n, int cap)
    : Error("ground set size " + std::to_string(n) + " exceeds the cap of " +
                std::to_string(cap),
            ExitCode::budget_exceeded) {}

namespace {
std::string describe(const char* prefix, double value) {
  std::ostringstream os;
  os.precision(6);
  os << prefix << value;
  return os.str();
}
}  // namespace

NormalizationMismatch::NormalizationMismatch(double relative_residual)
    : NumericalFailure(describe(
          "sum of principal minors disagrees with det(I+L); relative residual ",
          relative_residual)) {}

SingularInformation::SingularInformation(double smallest_eigenvalue)
    : NumericalFailure(describe(
          "Fisher information is singular; smallest eigenvalue ",
          smallest_eigenvalue)) {}

InsufficientPoints::InsufficientPoints(std::size_t count)
    : Error("log-log fit needs at least 3 points, got " + std::to_string(count),
            ExitCode::config_error) {}

NonpositiveValue::NonpositiveValue(std::size_t index)
    : Error("log-log fit point " + std::to_string(index) +
                " has a non-positive coordinate",
            ExitCode::numerical_failure) {}

}  // namespace dppmle
