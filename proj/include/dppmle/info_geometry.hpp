#pragma once

#include <array>
#include <vector>

#include <json.hpp>

#include "dppmle/dpp_model.hpp"
#include "dppmle/kernel_algebra.hpp"
#include "dppmle/subset_kernels.hpp"

namespace dppmle {

/// Φ_{L*}(L) = Σ_J p*_J log det(L_J) - log det(I + L).
double expected_log_likelihood(const DppTable& star, const KernelMatrix& l,
                               Exec exec = Exec::parallel);

/// a_{J,k} = Tr((L_J^{-1} H_J)^k) for every J and a_k = Tr(((I+L)^{-1} H)^k).
struct TraceStatistics {
  int order = 1;
  std::vector<double> per_subset;
  double global = 0.0;
};

TraceStatistics trace_statistics(const KernelMatrix& l, const SymmetricDirection& h,
                                 int k, Exec exec = Exec::parallel);

/// Local geometry of Φ_{L*} at a point L: the weights p*_J together with the
/// cached factorizations of every L_J. Built once, then read-only.
class LocalGeometry {
 public:
  /// Geometry at L = L*.
  explicit LocalGeometry(const DppTable& star, Exec exec = Exec::parallel);
  LocalGeometry(const DppTable& star, const KernelMatrix& at,
                Exec exec = Exec::parallel);

  const SubsetInverseCache& cache() const noexcept { return cache_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  int ground_size() const noexcept { return cache_.ground_size(); }

  /// d^k Φ(L)(H, ..., H) = (-1)^{k-1} (k-1)! (Σ_J p*_J a_{J,k} - a_k).
  double derivative(const SymmetricDirection& h, int k) const;

  /// -Var_{Z ~ p*}[Tr(L_Z^{-1} H_Z)]; equals the second derivative at L*.
  double variance_form(const SymmetricDirection& h) const;
  /// -(Σ_J p*_J a_{J,1}^2 - a_1^2), the second derivative rewritten through
  /// the once-differentiated normalization identity.
  double squared_trace_form(const SymmetricDirection& h) const;
  /// -3 Var_{Z ~ p*}[Tr((L_Z^{-1} H_Z)^2)]; equals the fourth derivative at
  /// L* along null directions.
  double fourth_order_variance_form(const SymmetricDirection& h) const;

  TracePowers trace_powers(const SymmetricDirection& h, int max_order) const;
  std::vector<double> global_powers(const SymmetricDirection& h, int max_order) const;

 private:
  std::vector<double> weights_;
  SubsetInverseCache cache_;
  Exec exec_;
};

double directional_derivative(const DppTable& star, const KernelMatrix& l,
                              const SymmetricDirection& h, int k,
                              Exec exec = Exec::parallel);

/// d²Φ(L*)(H, H) via the variance of the trace statistic.
double hessian_quadratic_form(const DppTable& star, const SymmetricDirection& h,
                              Exec exec = Exec::parallel);

struct HessianForm {
  Matrix matrix;       // m x m in the symmetric basis
  Vector eigenvalues;  // ascending
  Matrix eigenvectors; // columns match eigenvalues
};

/// Hessian of Φ at L* in the orthonormal symmetric basis, as minus the
/// weighted covariance of the per-subset score vectors.
HessianForm hessian_matrix(const DppTable& star, Exec exec = Exec::parallel);

/// Budget for hessian_matrix and everything built on it.
inline constexpr int kMaxHessianGroundSet = 12;

struct NullSpaceBasis {
  std::vector<std::pair<int, int>> pairs;  // i < j in different components
  std::vector<SymmetricDirection> basis;   // (E_ij + E_ji) / sqrt(2)
  std::size_t dimension() const noexcept { return basis.size(); }
};

NullSpaceBasis null_space_basis(const DeterminantalGraph& graph);

/// Fourth derivative at L* along H ∈ 𝒩(L*) by the variance formula. Throws
/// NotNullDirection when |d²Φ(L*)(H,H)| exceeds null_tol · max(1, ‖H‖²).
double fourth_order_form(const DppTable& star, const SymmetricDirection& h,
                         double null_tol = 1e-8, Exec exec = Exec::parallel);

struct NullPiece {
  SymmetricDirection piece;
  SignDiagonal flip;  // D L* D = L* and D piece D = -piece
  std::size_t first_component = 0;
  std::size_t second_component = 0;
};

/// Splits H ∈ 𝒩(L*) into one piece per pair of components with nonzero
/// cross entries. Throws NotNullDirection if any |H_ij| > zero_tol for i, j
/// in the same component.
std::vector<NullPiece> decompose_null_direction(const SymmetricDirection& h,
                                                const DeterminantalGraph& graph,
                                                double zero_tol = 0.0);

/// Residuals of the normalization identity Σ_J det(L_J) = det(I + L) and of
/// its first four directional derivatives, with weights p_J(L). Writing
/// Δf = Σ_J p_J f(a_J) - f(a):
///   r1 = Δa1
///   r2 = Δa2 - Δ(a1²)
///   r3 = Δa3 + Δ(a1³)/2 - 3Δ(a1 a2)/2
///   r4 = Δa4 - Δ(a1⁴)/6 + Δ(a1² a2) - 4Δ(a1 a3)/3 - Δ(a2²)/2
struct IdentityResiduals {
  double normalization = 0.0;         // relative
  std::array<double, 4> residual{};   // absolute
  std::array<double, 4> scale{};      // largest absolute term in each identity
  double matrix_form = 0.0;           // ‖Σ_J p_J [L_J^{-1}] - (I+L)^{-1}‖_F

  double relative(std::size_t k) const;
  double worst_relative() const;
};

IdentityResiduals identity_residuals(const KernelMatrix& l, const SymmetricDirection& h,
                                     Exec exec = Exec::parallel);
nlohmann::json to_json(const IdentityResiduals& r);

struct Curvature {
  double value = 0.0;  // smallest eigenvalue of -d²Φ(L*)
  bool reducible = false;
};

/// inf over unit-Frobenius H of -d²Φ(L*)(H, H). Reducible kernels return 0
/// with the flag set.
Curvature min_curvature(const KernelMatrix& star, Exec exec = Exec::parallel);

}  // namespace dppmle
