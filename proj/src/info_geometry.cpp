#include "dppmle/info_geometry.hpp"

#include <algorithm>
#include <cmath>

#include "dppmle/errors.hpp"

namespace dppmle {

double expected_log_likelihood(const DppTable& star, const KernelMatrix& l, Exec exec) {
  if (star.ground_size() != l.size()) throw InvalidKernel("ground set size mismatch");
  const auto log_dets = principal_log_dets(l.entries(), exec);
  double acc = 0.0;
  for (std::size_t m = 0; m < log_dets.size(); ++m) acc += star.prob(static_cast<Bits>(m)) * log_dets[m];
  const int n = l.size();
  return acc - log_det_spd(Matrix::Identity(n, n) + l.entries());
}

TraceStatistics trace_statistics(const KernelMatrix& l, const SymmetricDirection& h,
                                 int k, Exec exec) {
  if (k < 1) throw ConfigError("trace statistic order must be at least 1");
  if (h.size() != l.size()) throw InvalidKernel("direction size mismatch");
  const SubsetInverseCache cache(l.entries(), exec);
  const auto powers = subset_trace_powers(cache, h.entries(), k, exec);
  TraceStatistics out;
  out.order = k;
  out.per_subset.resize(cache.size());
  for (std::size_t m = 0; m < cache.size(); ++m) out.per_subset[m] = powers.at(static_cast<Bits>(m), k);
  out.global = global_trace_powers(l.entries(), h.entries(), k).back();
  return out;
}

// ------------------------------------------------------------ LocalGeometry

LocalGeometry::LocalGeometry(const DppTable& star, Exec exec)
    : LocalGeometry(star, star.kernel(), exec) {}

LocalGeometry::LocalGeometry(const DppTable& star, const KernelMatrix& at, Exec exec)
    : weights_(star.probs()), cache_(at.entries(), exec), exec_(exec) {
  if (star.ground_size() != at.size()) throw InvalidKernel("ground set size mismatch");
}

TracePowers LocalGeometry::trace_powers(const SymmetricDirection& h, int max_order) const {
  if (h.size() != ground_size()) throw InvalidKernel("direction size mismatch");
  return subset_trace_powers(cache_, h.entries(), max_order, exec_);
}

std::vector<double> LocalGeometry::global_powers(const SymmetricDirection& h,
                                                 int max_order) const {
  return global_trace_powers(cache_.kernel(), h.entries(), max_order);
}

double LocalGeometry::derivative(const SymmetricDirection& h, int k) const {
  if (k < 1) throw ConfigError("derivative order must be at least 1");
  const auto powers = trace_powers(h, k);
  double expected = 0.0;
  for (std::size_t m = 0; m < weights_.size(); ++m)
    expected += weights_[m] * powers.at(static_cast<Bits>(m), k);
  const double global = global_powers(h, k).back();
  double factor = 1.0;
  for (int i = 2; i < k; ++i) factor *= i;
  if (k % 2 == 0) factor = -factor;
  return factor * (expected - global);
}

namespace {

// Σ_J w_J (x_J - mean)², two-pass.
double weighted_variance(const std::vector<double>& w, const TracePowers& powers, int k) {
  double mean = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) mean += w[m] * powers.at(static_cast<Bits>(m), k);
  double var = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    const double d = powers.at(static_cast<Bits>(m), k) - mean;
    var += w[m] * d * d;
  }
  return var;
}

}  // namespace

double LocalGeometry::variance_form(const SymmetricDirection& h) const {
  return -weighted_variance(weights_, trace_powers(h, 1), 1);
}

double LocalGeometry::squared_trace_form(const SymmetricDirection& h) const {
  const auto powers = trace_powers(h, 1);
  double second = 0.0;
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    const double a = powers.at(static_cast<Bits>(m), 1);
    second += weights_[m] * a * a;
  }
  const double a1 = global_powers(h, 1)[0];
  return -(second - a1 * a1);
}

double LocalGeometry::fourth_order_variance_form(const SymmetricDirection& h) const {
  return -3.0 * weighted_variance(weights_, trace_powers(h, 2), 2);
}

// ------------------------------------------------------------ operations

double directional_derivative(const DppTable& star, const KernelMatrix& l,
                              const SymmetricDirection& h, int k, Exec exec) {
  return LocalGeometry(star, l, exec).derivative(h, k);
}

double hessian_quadratic_form(const DppTable& star, const SymmetricDirection& h, Exec exec) {
  return LocalGeometry(star, exec).variance_form(h);
}

HessianForm hessian_matrix(const DppTable& star, Exec exec) {
  const int n = star.ground_size();
  if (n > kMaxHessianGroundSet) throw GroundSetTooLarge(n, kMaxHessianGroundSet);
  const SubsetInverseCache cache(star.kernel().entries(), exec);
  const Matrix scores = subset_scores(cache, exec);
  HessianForm out;
  out.matrix = -weighted_covariance(scores, star.probs(), exec);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.matrix);
  if (eig.info() != Eigen::Success) throw NumericalFailure("Hessian eigensolve failed");
  out.eigenvalues = eig.eigenvalues();
  out.eigenvectors = eig.eigenvectors();
  return out;
}

NullSpaceBasis null_space_basis(const DeterminantalGraph& graph) {
  NullSpaceBasis out;
  for (int i = 0; i < graph.n; ++i) {
    for (int j = i + 1; j < graph.n; ++j) {
      if (graph.same_component(i, j)) continue;
      Matrix b = Matrix::Zero(graph.n, graph.n);
      b(i, j) = b(j, i) = M_SQRT1_2;
      out.pairs.emplace_back(i, j);
      out.basis.emplace_back(b);
    }
  }
  return out;
}

double fourth_order_form(const DppTable& star, const SymmetricDirection& h,
                         double null_tol, Exec exec) {
  const LocalGeometry geometry(star, exec);
  const double second = geometry.variance_form(h);
  const double norm2 = h.entries().squaredNorm();
  if (std::abs(second) > null_tol * std::max(1.0, norm2))
    throw NotNullDirection("direction is not in the Hessian null space (d2 = " +
                           std::to_string(second) + ")");
  return geometry.fourth_order_variance_form(h);
}

std::vector<NullPiece> decompose_null_direction(const SymmetricDirection& h,
                                                const DeterminantalGraph& graph,
                                                double zero_tol) {
  const int n = graph.n;
  if (h.size() != n) throw InvalidKernel("direction size mismatch");
  const Matrix& e = h.entries();
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      if (graph.same_component(i, j) && std::abs(e(i, j)) > zero_tol)
        throw NotNullDirection("direction has support inside a component at (" +
                               std::to_string(i) + ", " + std::to_string(j) + ")");

  std::vector<NullPiece> pieces;
  const std::size_t k = graph.components.size();
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      Matrix piece = Matrix::Zero(n, n);
      bool nonzero = false;
      for (int i : graph.components[a]) {
        for (int j : graph.components[b]) {
          piece(i, j) = e(i, j);
          piece(j, i) = e(j, i);
          nonzero = nonzero || e(i, j) != 0.0;
        }
      }
      if (!nonzero) continue;
      std::vector<int> signs(static_cast<std::size_t>(n), -1);
      for (int i : graph.components[a]) signs[static_cast<std::size_t>(i)] = 1;
      pieces.push_back({SymmetricDirection(piece), SignDiagonal(std::move(signs)), a, b});
    }
  }
  return pieces;
}

// ------------------------------------------------------- identity residuals

double IdentityResiduals::relative(std::size_t k) const {
  return scale[k] > 0.0 ? std::abs(residual[k]) / scale[k] : std::abs(residual[k]);
}

double IdentityResiduals::worst_relative() const {
  double worst = normalization;
  for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, relative(k));
  return worst;
}

IdentityResiduals identity_residuals(const KernelMatrix& l, const SymmetricDirection& h,
                                     Exec exec) {
  if (h.size() != l.size()) throw InvalidKernel("direction size mismatch");
  const DppTable table = build_table(l, TableOptions{SubsetInverseCache::kMaxGroundSet, exec});
  const SubsetInverseCache cache(l.entries(), exec);
  const auto powers = subset_trace_powers(cache, h.entries(), 4, exec);
  const auto g = global_trace_powers(l.entries(), h.entries(), 4);
  const auto& p = table.probs();

  // One Δ-term: expectation over subsets and the global value of f(a1..a4).
  struct Term {
    double expected = 0.0;
    double global = 0.0;
    double delta() const { return expected - global; }
    double magnitude() const { return std::max(std::abs(expected), std::abs(global)); }
  };
  auto term = [&](auto f) {
    Term t;
    for (std::size_t m = 0; m < p.size(); ++m) {
      const auto bits = static_cast<Bits>(m);
      t.expected += p[m] * f(powers.at(bits, 1), powers.at(bits, 2), powers.at(bits, 3),
                             powers.at(bits, 4));
    }
    t.global = f(g[0], g[1], g[2], g[3]);
    return t;
  };
  const Term a1 = term([](double x1, double, double, double) { return x1; });
  const Term a2 = term([](double, double x2, double, double) { return x2; });
  const Term a3 = term([](double, double, double x3, double) { return x3; });
  const Term a4 = term([](double, double, double, double x4) { return x4; });
  const Term a1sq = term([](double x1, double, double, double) { return x1 * x1; });
  const Term a1cube = term([](double x1, double, double, double) { return x1 * x1 * x1; });
  const Term a1a2 = term([](double x1, double x2, double, double) { return x1 * x2; });
  const Term a1quart = term([](double x1, double, double, double) { return x1 * x1 * x1 * x1; });
  const Term a1sq_a2 = term([](double x1, double x2, double, double) { return x1 * x1 * x2; });
  const Term a1a3 = term([](double x1, double, double x3, double) { return x1 * x3; });
  const Term a2sq = term([](double, double x2, double, double) { return x2 * x2; });

  auto largest = [](std::initializer_list<Term> terms) {
    double s = 0.0;
    for (const auto& t : terms) s = std::max(s, t.magnitude());
    return s;
  };

  IdentityResiduals r;
  r.normalization = table.identity_residual();
  r.residual[0] = a1.delta();
  r.scale[0] = largest({a1});
  r.residual[1] = a2.delta() - a1sq.delta();
  r.scale[1] = largest({a2, a1sq});
  r.residual[2] = a3.delta() + 0.5 * a1cube.delta() - 1.5 * a1a2.delta();
  r.scale[2] = largest({a3, a1cube, a1a2});
  r.residual[3] = a4.delta() - a1quart.delta() / 6.0 + a1sq_a2.delta() -
                  4.0 * a1a3.delta() / 3.0 - 0.5 * a2sq.delta();
  r.scale[3] = largest({a4, a1quart, a1sq_a2, a1a3, a2sq});

  const int n = l.size();
  const Matrix padded = weighted_padded_inverse_sum(cache, p, exec);
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) + l.entries());
  r.matrix_form = (padded - llt.solve(Matrix::Identity(n, n))).norm();
  return r;
}

nlohmann::json to_json(const IdentityResiduals& r) {
  return {{"normalization", r.normalization},
          {"r1", r.residual[0]},
          {"r2", r.residual[1]},
          {"r3", r.residual[2]},
          {"r4", r.residual[3]},
          {"scales", r.scale},
          {"matrix_form_residual", r.matrix_form}};
}

Curvature min_curvature(const KernelMatrix& star, Exec exec) {
  if (!determinantal_graph(star).irreducible()) return {0.0, true};
  const auto table = build_table(star, TableOptions{kMaxHessianGroundSet, exec});
  const auto form = hessian_matrix(table, exec);
  return {-form.eigenvalues.maxCoeff(), false};
}

}  // namespace dppmle
