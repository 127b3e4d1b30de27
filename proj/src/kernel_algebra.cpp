#include "dppmle/kernel_algebra.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dppmle/errors.hpp"

namespace dppmle {

namespace {

constexpr double kSpectralTol = 1e-12;

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() < 1 || a.rows() > kMaxGroundSet) {
    std::ostringstream os;
    os << what << " must be square with size in [1, " << kMaxGroundSet
       << "], got " << a.rows() << "x" << a.cols();
    throw InvalidKernel(os.str());
  }
}

Matrix mirror_lower(const Matrix& a) {
  Matrix s = a;
  for (Eigen::Index j = 0; j < s.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i) s(i, j) = s(j, i);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- SubsetMask

SubsetMask::SubsetMask(Bits bits, int n) : bits_(bits), n_(n) {
  if (n < 0 || n > kMaxGroundSet)
    throw InvalidKernel("ground set size out of range: " + std::to_string(n));
  if (n < 32 && (static_cast<std::uint64_t>(bits) >> n) != 0)
    throw InvalidKernel("subset mask has bits beyond the ground set");
}

SubsetMask SubsetMask::from_indices(const std::vector<int>& indices, int n) {
  Bits bits = 0;
  for (int i : indices) {
    if (i < 0 || i >= n) throw InvalidKernel("subset index out of range");
    bits |= Bits{1} << i;
  }
  return SubsetMask(bits, n);
}

int SubsetMask::cardinality() const noexcept { return std::popcount(bits_); }

std::vector<int> SubsetMask::indices() const { return mask_indices(bits_); }

std::vector<int> mask_indices(Bits bits) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::popcount(bits)));
  while (bits != 0) {
    out.push_back(std::countr_zero(bits));
    bits &= bits - 1;
  }
  return out;
}

// ------------------------------------------------------------ kernel types

KernelMatrix::KernelMatrix(const Matrix& entries) {
  require_square(entries, "kernel");
  if (!entries.allFinite()) throw InvalidKernel("kernel has non-finite entries");
  entries_ = mirror_lower(entries);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(entries_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(entries_.rows() - 1);
  margin_ = lo;
  if (!(lo > kSpectralTol * std::max(hi, 0.0)) || !(lo > 0.0)) {
    std::ostringstream os;
    os << "kernel is not positive definite (smallest eigenvalue " << lo
       << ", largest " << hi << ")";
    throw InvalidKernel(os.str());
  }
}

CorrelationKernel::CorrelationKernel(const Matrix& entries) {
  require_square(entries, "correlation kernel");
  if (!entries.allFinite())
    throw InvalidKernel("correlation kernel has non-finite entries");
  entries_ = mirror_lower(entries);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(entries_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(entries_.rows() - 1);
  if (!(lo > kSpectralTol) || !(hi < 1.0 - kSpectralTol)) {
    std::ostringstream os;
    os << "correlation kernel spectrum [" << lo << ", " << hi
       << "] is not inside (0, 1)";
    throw InvalidKernel(os.str());
  }
}

SignDiagonal::SignDiagonal(std::vector<int> signs) : signs_(std::move(signs)) {
  for (int s : signs_)
    if (s != 1 && s != -1) throw InvalidKernel("sign entries must be +1 or -1");
}

SignDiagonal SignDiagonal::identity(int n) {
  return SignDiagonal(std::vector<int>(static_cast<std::size_t>(n), 1));
}

SignDiagonal SignDiagonal::from_flips(Bits flips, int n) {
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = ((flips >> i) & 1U) ? -1 : 1;
  return SignDiagonal(std::move(s));
}

Bits SignDiagonal::flips() const noexcept {
  Bits b = 0;
  for (std::size_t i = 0; i < signs_.size(); ++i)
    if (signs_[i] < 0) b |= Bits{1} << i;
  return b;
}

SymmetricDirection::SymmetricDirection(const Matrix& entries) {
  if (entries.rows() != entries.cols())
    throw InvalidKernel("direction must be square");
  entries_ = mirror_lower(entries);
}

SymmetricDirection SymmetricDirection::zero(int n) {
  return SymmetricDirection(Matrix::Zero(n, n));
}

SymmetricDirection SymmetricDirection::from_coords(int n, const Vector& coords) {
  const auto pairs = symmetric_basis_pairs(n);
  if (coords.size() != static_cast<Eigen::Index>(pairs.size()))
    throw InvalidKernel("coordinate vector has the wrong length");
  Matrix h = Matrix::Zero(n, n);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const double c = coords(static_cast<Eigen::Index>(p));
    if (i == j) {
      h(i, i) = c;
    } else {
      h(i, j) = c * M_SQRT1_2;
      h(j, i) = h(i, j);
    }
  }
  return SymmetricDirection(h);
}

Vector SymmetricDirection::coords() const {
  const auto pairs = symmetric_basis_pairs(size());
  Vector c(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    c(static_cast<Eigen::Index>(p)) =
        i == j ? entries_(i, i) : M_SQRT2 * entries_(i, j);
  }
  return c;
}

Bits DeterminantalGraph::component_mask(std::size_t c) const {
  Bits b = 0;
  for (int i : components.at(c)) b |= Bits{1} << i;
  return b;
}

// ------------------------------------------------------------- operations

Matrix principal_submatrix(const Matrix& a, Bits bits) {
  const auto idx = mask_indices(bits);
  const auto k = static_cast<Eigen::Index>(idx.size());
  Matrix out(k, k);
  for (Eigen::Index r = 0; r < k; ++r)
    for (Eigen::Index c = 0; c < k; ++c)
      out(r, c) = a(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
  return out;
}

Matrix principal_submatrix(const Matrix& a, SubsetMask subset) {
  if (subset.ground_size() != a.rows())
    throw InvalidKernel("subset ground size does not match the matrix");
  return principal_submatrix(a, subset.bits());
}

Matrix embed(const Matrix& block, Bits bits, int n) {
  const auto idx = mask_indices(bits);
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c)
      out(idx[r], idx[c]) = block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return out;
}

double log_det_spd(const Matrix& a) {
  if (a.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("Cholesky factorization failed in log_det_spd");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

CorrelationKernel l_to_k(const KernelMatrix& l) {
  const auto n = l.size();
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) + l.entries());
  if (llt.info() != Eigen::Success)
    throw NumericalFailure("I + L is not invertible");
  const Matrix k = llt.solve(l.entries());
  return CorrelationKernel(0.5 * (k + k.transpose()));
}

KernelMatrix k_to_l(const CorrelationKernel& k) {
  const auto n = k.size();
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) - k.entries());
  if (llt.info() != Eigen::Success)
    throw InvalidKernel("I - K is not invertible");
  const Matrix l = llt.solve(k.entries());
  return KernelMatrix(0.5 * (l + l.transpose()));
}

Matrix conjugate_by_signs(const Matrix& a, const SignDiagonal& d) {
  if (d.size() != a.rows()) throw InvalidKernel("sign vector size mismatch");
  Matrix out = a;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (d[static_cast<int>(i)] != d[static_cast<int>(j)]) out(i, j) = -a(i, j);
  return out;
}

KernelMatrix conjugate_by_signs(const KernelMatrix& l, const SignDiagonal& d) {
  return KernelMatrix(conjugate_by_signs(l.entries(), d));
}

DeterminantalGraph determinantal_graph(const Matrix& l, double zero_tol) {
  const int n = static_cast<int>(l.rows());
  DeterminantalGraph g;
  g.n = n;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      auto& p = parent[static_cast<std::size_t>(x)];
      p = parent[static_cast<std::size_t>(p)];
      x = p;
    }
    return x;
  };
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (std::abs(l(i, j)) > zero_tol) {
        g.edges.emplace_back(i, j);
        const int a = find(i), b = find(j);
        if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
      }
    }
  }
  // Roots are component minima, so a root is labelled before its members.
  g.component_of.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (root == i) {
      g.component_of[static_cast<std::size_t>(i)] = static_cast<int>(g.components.size());
      g.components.emplace_back();
    } else {
      g.component_of[static_cast<std::size_t>(i)] = g.component_of[static_cast<std::size_t>(root)];
    }
    g.components[static_cast<std::size_t>(g.component_of[static_cast<std::size_t>(i)])].push_back(i);
  }
  return g;
}

std::vector<std::pair<int, int>> symmetric_basis_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n + 1) / 2));
  for (int i = 0; i < n; ++i) pairs.emplace_back(i, i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

std::vector<SymmetricDirection> symmetric_basis(int n) {
  if (n < 1) throw InvalidKernel("symmetric basis needs n >= 1");
  std::vector<SymmetricDirection> basis;
  for (const auto& [i, j] : symmetric_basis_pairs(n)) {
    Matrix b = Matrix::Zero(n, n);
    if (i == j) {
      b(i, i) = 1.0;
    } else {
      b(i, j) = M_SQRT1_2;
      b(j, i) = M_SQRT1_2;
    }
    basis.emplace_back(b);
  }
  return basis;
}

KernelMatrix tridiagonal_kernel(int n, double a, double b) {
  if (n < 1) throw InvalidKernel("tridiagonal kernel needs n >= 1");
  Matrix l = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    l(i, i) = a;
    if (i + 1 < n) l(i, i + 1) = l(i + 1, i) = b;
  }
  return KernelMatrix(l);
}

KernelMatrix block_diagonal_kernel(const std::vector<KernelMatrix>& blocks) {
  int n = 0;
  for (const auto& b : blocks) n += b.size();
  Matrix l = Matrix::Zero(n, n);
  int offset = 0;
  for (const auto& b : blocks) {
    l.block(offset, offset, b.size(), b.size()) = b.entries();
    offset += b.size();
  }
  return KernelMatrix(l);
}

KernelMatrix random_kernel(int n, std::mt19937_64& rng, double min_eig,
                           double max_eig) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> spectrum(min_eig, max_eig);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Vector lambda(n);
  for (int i = 0; i < n; ++i) lambda(i) = spectrum(rng);
  const Matrix l = q * lambda.asDiagonal() * q.transpose();
  return KernelMatrix(0.5 * (l + l.transpose()));
}

SymmetricDirection random_direction(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix h(n, n);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = normal(rng);
  h = (0.5 * (h + h.transpose())).eval();
  return SymmetricDirection(h / h.norm());
}

Matrix matrix_from_json(const nlohmann::json& j, std::ostream* warn) {
  if (!j.is_object() || !j.contains("n") || !j.contains("entries"))
    throw ConfigError("matrix literal needs fields 'n' and 'entries'");
  if (!j.at("n").is_number_integer())
    throw ConfigError("matrix literal field 'n' must be an integer");
  const int n = j.at("n").get<int>();
  const auto& e = j.at("entries");
  if (n < 1 || n > kMaxGroundSet)
    throw ConfigError("matrix literal field 'n' out of range");
  const auto un = static_cast<std::size_t>(n);
  // Either n*n reals in row-major order or n rows of n reals.
  const bool nested = e.is_array() && e.size() == un && e[0].is_array();
  if (nested) {
    for (const auto& row : e)
      if (!row.is_array() || row.size() != un)
        throw ConfigError("matrix literal field 'entries' must hold n rows of n reals");
  } else if (!e.is_array() || e.size() != un * un) {
    throw ConfigError("matrix literal field 'entries' must hold n*n reals");
  }
  Matrix a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const auto& v = nested ? e[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                             : e[static_cast<std::size_t>(r * n + c)];
      if (!v.is_number())
        throw ConfigError("matrix literal field 'entries' has a non-number");
      a(r, c) = v.get<double>();
    }
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 && warn != nullptr)
    *warn << "warning: matrix literal asymmetric by " << asym
          << "; symmetrizing\n";
  return 0.5 * (a + a.transpose());
}

nlohmann::json matrix_to_json(const Matrix& a) {
  nlohmann::json entries = nlohmann::json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) entries.push_back(a(r, c));
  return {{"n", a.rows()}, {"entries", entries}};
}

}  // namespace dppmle
