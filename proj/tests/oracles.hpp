#pragma once

// Independent oracles for the tests. Nothing here calls into the library's
// numerical code: determinants come from the Leibniz expansion, and Φ for
// finite differences is evaluated in long double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "dppmle/kernel_algebra.hpp"

namespace oracle {

using dppmle::Bits;
using dppmle::Matrix;

/// Σ over permutations; fine up to n = 8.
inline long double leibniz_det(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return 1.0L;
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  long double total = 0.0L;
  do {
    int inversions = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (perm[i] > perm[j]) ++inversions;
    long double term = (inversions % 2 == 0) ? 1.0L : -1.0L;
    for (int i = 0; i < n; ++i) term *= a(i, perm[i]);
    total += term;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

inline Matrix sub(const Matrix& a, Bits bits) {
  std::vector<int> idx;
  for (int i = 0; i < a.rows(); ++i)
    if ((bits >> i) & 1U) idx.push_back(i);
  Matrix s(idx.size(), idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) s(r, c) = a(idx[r], idx[c]);
  return s;
}

/// p_J = det(L_J) / det(I + L) via Leibniz.
inline std::vector<double> leibniz_probs(const Matrix& l) {
  const int n = static_cast<int>(l.rows());
  const long double z = leibniz_det(Matrix::Identity(n, n) + l);
  std::vector<double> p(std::size_t{1} << n);
  for (Bits j = 0; j < p.size(); ++j) p[j] = static_cast<double>(leibniz_det(sub(l, j)) / z);
  return p;
}

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

inline long double log_det_ld(const LMatrix& a) {
  if (a.rows() == 0) return 0.0L;
  Eigen::LLT<LMatrix> llt(a);
  long double s = 0.0L;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += std::log(llt.matrixL()(i, i));
  return 2.0L * s;
}

/// Φ(L + tH) = Σ_J w_J log det((L + tH)_J) - log det(I + L + tH), long double.
inline long double phi_along(const std::vector<double>& w, const Matrix& l, const Matrix& h,
                             long double t) {
  const int n = static_cast<int>(l.rows());
  const LMatrix m = l.cast<long double>() + t * h.cast<long double>();
  long double total = 0.0L;
  for (Bits j = 1; j < w.size(); ++j) {
    if (w[j] == 0.0) continue;
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if ((j >> i) & 1U) idx.push_back(i);
    LMatrix s(idx.size(), idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < idx.size(); ++c) s(r, c) = m(idx[r], idx[c]);
    total += static_cast<long double>(w[j]) * log_det_ld(s);
  }
  return total - log_det_ld(LMatrix::Identity(n, n) + m);
}

/// Second-order central stencil for the k-th derivative at 0.
inline long double central(const std::function<long double(long double)>& f, int k,
                           long double t) {
  switch (k) {
    case 1: return (f(t) - f(-t)) / (2 * t);
    case 2: return (f(t) - 2 * f(0) + f(-t)) / (t * t);
    case 3: return (f(2 * t) - 2 * f(t) + 2 * f(-t) - f(-2 * t)) / (2 * t * t * t);
    default: return (f(2 * t) - 4 * f(t) + 6 * f(0) - 4 * f(-t) + f(-2 * t)) / (t * t * t * t);
  }
}

struct Richardson {
  double value;    // extrapolated
  double spread;   // |extrapolated - previous level|, an error indicator
};

/// Two Richardson levels on the central stencil with steps t, t/2, t/4,
/// cancelling the t² and t⁴ error terms.
inline Richardson richardson(const std::function<long double(long double)>& f, int k,
                             long double t) {
  const long double d0 = central(f, k, t);
  const long double d1 = central(f, k, t / 2);
  const long double d2 = central(f, k, t / 4);
  const long double r0 = (4 * d1 - d0) / 3;
  const long double r1 = (4 * d2 - d1) / 3;
  const long double extrapolated = (16 * r1 - r0) / 15;
  return {static_cast<double>(extrapolated), static_cast<double>(std::fabs(extrapolated - r1))};
}

/// Step used for the k-th derivative.
inline long double fd_step(int k) { return k <= 2 ? 4e-3L : 1.6e-2L; }

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

}  // namespace oracle
