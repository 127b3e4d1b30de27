#include "dppmle/subset_kernels.hpp"

#include <atomic>
#include <bit>
#include <cmath>

#include "dppmle/errors.hpp"

namespace dppmle {

std::size_t subset_count(int n) {
  if (n < 0 || n > kMaxGroundSet) throw GroundSetTooLarge(n, kMaxGroundSet);
  return std::size_t{1} << n;
}

namespace {

// Gathers L_J into `out` (resized to |J| x |J|).
void gather(const Matrix& l, Bits bits, int* idx, Matrix& out) {
  int k = 0;
  for (Bits b = bits; b != 0; b &= b - 1) idx[k++] = std::countr_zero(b);
  out.resize(k, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < k; ++r) out(r, c) = l(idx[r], idx[c]);
}

}  // namespace

std::vector<double> principal_log_dets(const Matrix& l, Exec exec) {
  const int n = static_cast<int>(l.rows());
  const std::size_t count = subset_count(n);
  std::vector<double> out(count, 0.0);
  std::atomic<bool> failed{false};
  for_each_index(static_cast<std::int64_t>(count), exec, [&](std::int64_t m) {
    if (m == 0) return;
    int idx[kMaxGroundSet];
    Matrix sub;
    gather(l, static_cast<Bits>(m), idx, sub);
    Eigen::LLT<Eigen::Ref<Matrix>> llt(sub);
    if (llt.info() != Eigen::Success) {
      failed = true;
      return;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sub.rows(); ++i) acc += std::log(sub(i, i));
    out[static_cast<std::size_t>(m)] = 2.0 * acc;
  });
  if (failed) throw NumericalFailure("principal submatrix is not positive definite");
  return out;
}

SubsetInverseCache::SubsetInverseCache(const Matrix& l, Exec exec)
    : n_(static_cast<int>(l.rows())), l_(l) {
  if (n_ > kMaxGroundSet) throw GroundSetTooLarge(n_, kMaxGroundSet);
  const std::size_t count = subset_count(n_);
  log_dets_.assign(count, 0.0);
  offsets_.resize(count + 1);
  offsets_[0] = 0;
  for (std::size_t m = 0; m < count; ++m) {
    const auto k = static_cast<std::size_t>(std::popcount(static_cast<Bits>(m)));
    offsets_[m + 1] = offsets_[m] + k * k;
  }
  storage_.assign(offsets_[count], 0.0);

  std::atomic<bool> failed{false};
  for_each_index(static_cast<std::int64_t>(count), exec, [&](std::int64_t m) {
    if (m == 0) return;
    const auto bits = static_cast<Bits>(m);
    int idx[kMaxGroundSet];
    Matrix sub;
    gather(l_, bits, idx, sub);
    Eigen::LLT<Matrix> llt(sub);
    if (llt.info() != Eigen::Success) {
      failed = true;
      return;
    }
    log_dets_[bits] = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const auto k = sub.rows();
    Eigen::Map<Matrix> inv(storage_.data() + offsets_[bits], k, k);
    inv = llt.solve(Matrix::Identity(k, k));
  });
  if (failed) throw NumericalFailure("principal submatrix is not positive definite");
}

Eigen::Map<const Matrix> SubsetInverseCache::inverse(Bits j) const {
  const auto k = static_cast<Eigen::Index>(std::popcount(j));
  return Eigen::Map<const Matrix>(storage_.data() + offsets_[j], k, k);
}

TracePowers subset_trace_powers(const SubsetInverseCache& cache, const Matrix& h,
                                int max_order, Exec exec) {
  TracePowers out;
  out.n = cache.ground_size();
  out.max_order = max_order;
  out.values.assign(cache.size() * static_cast<std::size_t>(max_order), 0.0);
  for_each_index(static_cast<std::int64_t>(cache.size()), exec, [&](std::int64_t m) {
    if (m == 0) return;
    const auto bits = static_cast<Bits>(m);
    int idx[kMaxGroundSet];
    Matrix hj;
    gather(h, bits, idx, hj);
    const Matrix a = cache.inverse(bits) * hj;
    Matrix power = a;
    double* row = out.values.data() + static_cast<std::size_t>(m) * static_cast<std::size_t>(max_order);
    for (int k = 1; k <= max_order; ++k) {
      if (k > 1) power = power * a;
      row[k - 1] = power.trace();
    }
  });
  return out;
}

std::vector<double> global_trace_powers(const Matrix& l, const Matrix& h, int max_order) {
  const auto n = l.rows();
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) + l);
  if (llt.info() != Eigen::Success) throw NumericalFailure("I + L is not invertible");
  const Matrix a = llt.solve(h);
  std::vector<double> out(static_cast<std::size_t>(max_order));
  Matrix power = a;
  for (int k = 1; k <= max_order; ++k) {
    if (k > 1) power = power * a;
    out[static_cast<std::size_t>(k - 1)] = power.trace();
  }
  return out;
}

Matrix subset_scores(const SubsetInverseCache& cache, Exec exec) {
  const int n = cache.ground_size();
  const auto pairs = symmetric_basis_pairs(n);
  const auto m = static_cast<Eigen::Index>(pairs.size());
  Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(cache.size()), m);
  for_each_index(static_cast<std::int64_t>(cache.size()), exec, [&](std::int64_t s) {
    const auto bits = static_cast<Bits>(s);
    // position of each ground index inside J, or -1
    int pos[kMaxGroundSet];
    int k = 0;
    for (int i = 0; i < n; ++i) pos[i] = ((bits >> i) & 1U) ? k++ : -1;
    const auto inv = cache.inverse(bits);
    for (Eigen::Index p = 0; p < m; ++p) {
      const auto [i, j] = pairs[static_cast<std::size_t>(p)];
      if (pos[i] < 0 || pos[j] < 0) continue;
      scores(s, p) = i == j ? inv(pos[i], pos[i]) : M_SQRT2 * inv(pos[i], pos[j]);
    }
  });
  return scores;
}

Matrix weighted_covariance(const Matrix& scores, std::span<const double> weights,
                           Exec exec) {
  const auto rows = scores.rows();
  const auto m = scores.cols();
  if (static_cast<std::size_t>(rows) != weights.size())
    throw NumericalFailure("weight vector does not match the score rows");
  Vector mean = Vector::Zero(m);
  for_each_index(m, exec, [&](std::int64_t p) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) acc += weights[static_cast<std::size_t>(r)] * scores(r, p);
    mean(p) = acc;
  });
  Matrix centered = scores.rowwise() - mean.transpose();
  Matrix cov(m, m);
  for_each_index(m, exec, [&](std::int64_t p) {
    for (Eigen::Index q = 0; q <= p; ++q) {
      double acc = 0.0;
      for (Eigen::Index r = 0; r < rows; ++r)
        acc += weights[static_cast<std::size_t>(r)] * centered(r, p) * centered(r, q);
      cov(p, q) = acc;
    }
  });
  for (Eigen::Index p = 0; p < m; ++p)
    for (Eigen::Index q = p + 1; q < m; ++q) cov(p, q) = cov(q, p);
  return cov;
}

Matrix weighted_padded_inverse_sum(const SubsetInverseCache& cache,
                                   std::span<const double> weights, Exec exec) {
  const int n = cache.ground_size();
  if (weights.size() != cache.size())
    throw NumericalFailure("weight vector does not match the subset count");
  Matrix out = Matrix::Zero(n, n);
  for_each_index(static_cast<std::int64_t>(n) * n, exec, [&](std::int64_t e) {
    const int i = static_cast<int>(e / n);
    const int j = static_cast<int>(e % n);
    if (j > i) return;
    const Bits need = (Bits{1} << i) | (Bits{1} << j);
    const Bits below_i = (Bits{1} << i) - 1;
    const Bits below_j = (Bits{1} << j) - 1;
    double acc = 0.0;
    for (std::size_t s = 0; s < cache.size(); ++s) {
      const auto bits = static_cast<Bits>(s);
      if ((bits & need) != need || weights[s] == 0.0) continue;
      const int pi = std::popcount(bits & below_i);
      const int pj = std::popcount(bits & below_j);
      acc += weights[s] * cache.inverse(bits)(pi, pj);
    }
    out(i, j) = acc;
    out(j, i) = acc;
  });
  return out;
}

}  // namespace dppmle
