#pragma once

// Data-parallel kernels over the 2^n principal submatrices of a kernel.
// Every loop writes to its own indexed slot and every sum runs in a fixed
// order, so serial and OpenMP execution give bit-identical results.

#include <cstdint>
#include <span>
#include <vector>

#include "dppmle/kernel_algebra.hpp"

namespace dppmle {

enum class Exec { serial, parallel };

/// Runs body(i) for i in [0, count), in parallel when requested. The body
/// must not throw.
template <class Body>
void for_each_index(std::int64_t count, Exec exec, Body&& body) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < count; ++i) body(i);
  } else {
    for (std::int64_t i = 0; i < count; ++i) body(i);
  }
}

/// 2^n, checked against kMaxGroundSet.
std::size_t subset_count(int n);

/// log det(L_J) for every J, indexed by J's bits (entry 0 is log det of the
/// empty matrix, 0). Uses one Cholesky factorization per subset.
std::vector<double> principal_log_dets(const Matrix& l, Exec exec = Exec::parallel);

/// Inverse and log determinant of every principal submatrix of L, built once
/// and shared read-only afterwards.
class SubsetInverseCache {
 public:
  static constexpr int kMaxGroundSet = 16;

  explicit SubsetInverseCache(const Matrix& l, Exec exec = Exec::parallel);

  int ground_size() const noexcept { return n_; }
  std::size_t size() const noexcept { return log_dets_.size(); }
  const Matrix& kernel() const noexcept { return l_; }
  double log_det(Bits j) const { return log_dets_[j]; }
  const std::vector<double>& log_dets() const noexcept { return log_dets_; }
  /// L_J^{-1} as a |J| x |J| view (indices in increasing order).
  Eigen::Map<const Matrix> inverse(Bits j) const;

 private:
  int n_;
  Matrix l_;
  std::vector<double> log_dets_;
  std::vector<std::size_t> offsets_;
  std::vector<double> storage_;
};

/// a_{J,k} = Tr((L_J^{-1} H_J)^k) for k = 1..max_order and every J.
struct TracePowers {
  int n = 0;
  int max_order = 0;
  std::vector<double> values;  // row J, column k-1

  double at(Bits j, int k) const {
    return values[static_cast<std::size_t>(j) * static_cast<std::size_t>(max_order) +
                  static_cast<std::size_t>(k - 1)];
  }
};

TracePowers subset_trace_powers(const SubsetInverseCache& cache, const Matrix& h,
                                int max_order, Exec exec = Exec::parallel);

/// Tr(((I+L)^{-1} H)^k) for k = 1..max_order.
std::vector<double> global_trace_powers(const Matrix& l, const Matrix& h, int max_order);

/// Row J holds Tr(L_J^{-1} (B_p)_J) for each symmetric basis element B_p.
Matrix subset_scores(const SubsetInverseCache& cache, Exec exec = Exec::parallel);

/// Σ_J w_J (s_J - μ)(s_J - μ)ᵀ with μ = Σ_J w_J s_J, rows of `scores` being
/// the s_J. Parallel over output rows.
Matrix weighted_covariance(const Matrix& scores, std::span<const double> weights,
                           Exec exec = Exec::parallel);

/// Σ_J w_J [L_J^{-1}] zero-padded to n x n. Parallel over output entries.
Matrix weighted_padded_inverse_sum(const SubsetInverseCache& cache,
                                   std::span<const double> weights,
                                   Exec exec = Exec::parallel);

}  // namespace dppmle
