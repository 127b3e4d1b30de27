#include "dppmle/reference.hpp"

#include "dppmle/subset_kernels.hpp"

namespace dppmle::reference {

std::vector<double> principal_minors(const Matrix& l) {
  const int n = static_cast<int>(l.rows());
  std::vector<double> out(subset_count(n));
  for (std::size_t m = 0; m < out.size(); ++m) {
    const Matrix sub = principal_submatrix(l, static_cast<Bits>(m));
    out[m] = sub.rows() == 0 ? 1.0 : sub.partialPivLu().determinant();
  }
  return out;
}

std::vector<double> probabilities(const Matrix& l) {
  const auto n = l.rows();
  const double z = (Matrix::Identity(n, n) + l).partialPivLu().determinant();
  auto p = principal_minors(l);
  for (double& v : p) v /= z;
  return p;
}

double subset_trace_power(const Matrix& l, const Matrix& h, Bits j, int k) {
  if (j == 0) return 0.0;
  const Matrix lj = principal_submatrix(l, j);
  const Matrix hj = principal_submatrix(h, j);
  const Matrix a = lj.inverse() * hj;
  Matrix power = Matrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < k; ++i) power = power * a;
  return power.trace();
}

double variance_form(const Matrix& l, const std::vector<double>& p, const Matrix& h) {
  double mean = 0.0, second = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) {
    const double t = subset_trace_power(l, h, static_cast<Bits>(m), 1);
    mean += p[m] * t;
    second += p[m] * t * t;
  }
  return -(second - mean * mean);
}

Matrix hessian_by_polarization(const Matrix& l) {
  const int n = static_cast<int>(l.rows());
  const auto basis = symmetric_basis(n);
  const auto p = probabilities(l);
  const auto m = static_cast<Eigen::Index>(basis.size());
  Vector diag(m);
  for (Eigen::Index a = 0; a < m; ++a)
    diag(a) = variance_form(l, p, basis[static_cast<std::size_t>(a)].entries());
  Matrix out(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    out(a, a) = diag(a);
    for (Eigen::Index b = a + 1; b < m; ++b) {
      const Matrix sum = basis[static_cast<std::size_t>(a)].entries() +
                         basis[static_cast<std::size_t>(b)].entries();
      out(a, b) = out(b, a) = 0.5 * (variance_form(l, p, sum) - diag(a) - diag(b));
    }
  }
  return out;
}

Matrix likelihood_gradient(const std::vector<double>& weights, const Matrix& l) {
  const int n = static_cast<int>(l.rows());
  Matrix g = -(Matrix::Identity(n, n) + l).inverse();
  for (std::size_t m = 1; m < weights.size(); ++m) {
    if (weights[m] == 0.0) continue;
    const auto bits = static_cast<Bits>(m);
    g += weights[m] * embed(principal_submatrix(l, bits).inverse(), bits, n);
  }
  return g;
}

}  // namespace dppmle::reference
