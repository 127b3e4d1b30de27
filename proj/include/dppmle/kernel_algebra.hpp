#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dppmle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Bits = std::uint32_t;

/// Largest ground set the bitmask machinery supports at all. Enumeration
/// caps (see DppTable) are much smaller.
inline constexpr int kMaxGroundSet = 30;

/// A subset J of {0, ..., n-1}. Subsets order by `bits`; indices within a
/// subset are increasing.
class SubsetMask {
 public:
  SubsetMask(Bits bits, int n);

  static SubsetMask empty(int n) { return SubsetMask(0, n); }
  static SubsetMask from_indices(const std::vector<int>& indices, int n);

  Bits bits() const noexcept { return bits_; }
  int ground_size() const noexcept { return n_; }
  int cardinality() const noexcept;
  bool contains(int i) const noexcept { return (bits_ >> i) & 1U; }
  std::vector<int> indices() const;

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;

 private:
  Bits bits_;
  int n_;
};

/// Indices of the set bits of `bits`, increasing.
std::vector<int> mask_indices(Bits bits);

/// Symmetric positive-definite kernel L. Construction mirrors the lower
/// triangle into the upper one and checks positive definiteness with a
/// symmetric eigensolve.
class KernelMatrix {
 public:
  explicit KernelMatrix(const Matrix& entries);

  int size() const noexcept { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const noexcept { return entries_; }
  double operator()(int i, int j) const { return entries_(i, j); }
  /// Smallest eigenvalue found at construction.
  double margin() const noexcept { return margin_; }

 private:
  Matrix entries_;
  double margin_;
};

/// Correlation kernel K with spectrum strictly inside (0, 1).
class CorrelationKernel {
 public:
  explicit CorrelationKernel(const Matrix& entries);

  int size() const noexcept { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const noexcept { return entries_; }

 private:
  Matrix entries_;
};

/// D = Diag(signs), signs in {+1, -1}.
class SignDiagonal {
 public:
  explicit SignDiagonal(std::vector<int> signs);
  static SignDiagonal identity(int n);
  /// Bit i of `flips` set means signs[i] = -1.
  static SignDiagonal from_flips(Bits flips, int n);

  int size() const noexcept { return static_cast<int>(signs_.size()); }
  int operator[](int i) const { return signs_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& signs() const noexcept { return signs_; }
  Bits flips() const noexcept;

  friend bool operator==(const SignDiagonal&, const SignDiagonal&) = default;

 private:
  std::vector<int> signs_;
};

/// A symmetric perturbation direction H, with coordinates in the orthonormal
/// basis returned by symmetric_basis().
class SymmetricDirection {
 public:
  explicit SymmetricDirection(const Matrix& entries);
  static SymmetricDirection zero(int n);
  static SymmetricDirection from_coords(int n, const Vector& coords);

  int size() const noexcept { return static_cast<int>(entries_.rows()); }
  const Matrix& entries() const noexcept { return entries_; }
  Vector coords() const;
  double norm() const { return entries_.norm(); }

 private:
  Matrix entries_;
};

struct DeterminantalGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // i < j
  std::vector<std::vector<int>> components;  // sorted by smallest member
  std::vector<int> component_of;

  bool irreducible() const noexcept { return components.size() == 1; }
  bool same_component(int i, int j) const {
    return component_of[static_cast<std::size_t>(i)] ==
           component_of[static_cast<std::size_t>(j)];
  }
  Bits component_mask(std::size_t c) const;
};

/// Rows and columns of `a` indexed by J. The empty subset gives a 0x0 matrix.
Matrix principal_submatrix(const Matrix& a, SubsetMask subset);
Matrix principal_submatrix(const Matrix& a, Bits bits);
/// Places `block` at rows/columns J of an n x n zero matrix.
Matrix embed(const Matrix& block, Bits bits, int n);

/// log det of a symmetric positive-definite matrix; 0 for a 0x0 matrix.
double log_det_spd(const Matrix& a);

CorrelationKernel l_to_k(const KernelMatrix& l);
KernelMatrix k_to_l(const CorrelationKernel& k);

Matrix conjugate_by_signs(const Matrix& a, const SignDiagonal& d);
KernelMatrix conjugate_by_signs(const KernelMatrix& l, const SignDiagonal& d);

DeterminantalGraph determinantal_graph(const Matrix& l, double zero_tol = 0.0);
inline DeterminantalGraph determinantal_graph(const KernelMatrix& l,
                                              double zero_tol = 0.0) {
  return determinantal_graph(l.entries(), zero_tol);
}

/// (i, j) pairs labelling the symmetric basis: (i, i) first, then i < j in
/// row-major order.
std::vector<std::pair<int, int>> symmetric_basis_pairs(int n);
/// E_ii, then (E_ij + E_ji)/sqrt(2); orthonormal under <A, B> = Tr(AB).
std::vector<SymmetricDirection> symmetric_basis(int n);

// Constructors for the kernels used by the experiments.

/// a on the diagonal, b on the first off-diagonals.
KernelMatrix tridiagonal_kernel(int n, double a, double b);
KernelMatrix block_diagonal_kernel(const std::vector<KernelMatrix>& blocks);

/// Q Diag(λ) Qᵀ with Haar-ish Q and λ uniform in [min_eig, max_eig].
KernelMatrix random_kernel(int n, std::mt19937_64& rng, double min_eig = 0.2,
                           double max_eig = 3.0);
SymmetricDirection random_direction(int n, std::mt19937_64& rng);

// JSON literals: {"n": int, "entries": [n*n reals, row-major]}.

/// Reads a matrix literal, symmetrizing by (A + Aᵀ)/2. Writes a warning to
/// `warn` when the asymmetry exceeds 1e-9.
Matrix matrix_from_json(const nlohmann::json& j, std::ostream* warn = nullptr);
nlohmann::json matrix_to_json(const Matrix& a);

}  // namespace dppmle
