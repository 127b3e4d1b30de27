#include "dppmle/mle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dppmle/errors.hpp"
#include "dppmle/info_geometry.hpp"
#include "dppmle/rng.hpp"

namespace dppmle {

// ------------------------------------------------------------------ config

void MleConfig::validate() const {
  if (!(alpha > 0.0 && alpha < beta && beta < 1.0))
    throw ConfigError("mle: spectral box needs 0 < alpha < beta < 1");
  if (restarts < 1) throw ConfigError("mle: restarts must be at least 1");
  if (max_iters < 1) throw ConfigError("mle: max_iters must be at least 1");
  if (!(grad_tol > 0.0)) throw ConfigError("mle: grad_tol must be positive");
  if (!(init_jitter >= 0.0)) throw ConfigError("mle: init_jitter must be non-negative");
}

nlohmann::json to_json(const MleConfig& c) {
  return {{"alpha", c.alpha},         {"beta", c.beta},
          {"restarts", c.restarts},   {"max_iters", c.max_iters},
          {"grad_tol", c.grad_tol},   {"init_jitter", c.init_jitter},
          {"seed", c.seed}};
}

MleConfig mle_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("mle: config must be an object");
  MleConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "restarts") c.restarts = value.get<int>();
      else if (key == "max_iters") c.max_iters = value.get<int>();
      else if (key == "grad_tol") c.grad_tol = value.get<double>();
      else if (key == "init_jitter") c.init_jitter = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("mle: unknown field '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("mle: field '" + key + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const MleResult& r) {
  return {{"estimate", matrix_to_json(r.estimate.entries())},
          {"log_likelihood", r.log_likelihood},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"restart_index", r.restart_index},
          {"gradient_norm", r.gradient_norm}};
}

// -------------------------------------------------------------- likelihood

namespace {

struct Evaluation {
  double value = 0.0;
  Matrix gradient;
  bool ok = true;
};

Evaluation evaluate(const EmpiricalTable& freqs, const Matrix& l, bool with_gradient) {
  const int n = static_cast<int>(l.rows());
  if (freqs.n != n) throw InvalidKernel("frequency table and kernel sizes differ");
  Evaluation e;
  if (with_gradient) e.gradient = Matrix::Zero(n, n);
  for (std::size_t m = 1; m < freqs.freqs.size(); ++m) {
    const double w = freqs.freqs[m];
    if (w == 0.0) continue;
    const auto bits = static_cast<Bits>(m);
    const Matrix sub = principal_submatrix(l, bits);
    Eigen::LLT<Matrix> llt(sub);
    if (llt.info() != Eigen::Success) {
      e.ok = false;
      return e;
    }
    e.value += w * 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    if (with_gradient) {
      const Matrix inv = llt.solve(Matrix::Identity(sub.rows(), sub.cols()));
      const auto idx = mask_indices(bits);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c)
          e.gradient(idx[r], idx[c]) += w * inv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  Eigen::LLT<Matrix> llt(Matrix::Identity(n, n) + l);
  if (llt.info() != Eigen::Success) {
    e.ok = false;
    return e;
  }
  e.value -= 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  if (with_gradient) e.gradient -= llt.solve(Matrix::Identity(n, n));
  if (!std::isfinite(e.value)) e.ok = false;
  return e;
}

}  // namespace

double empirical_log_likelihood(const EmpiricalTable& freqs, const KernelMatrix& l) {
  const auto e = evaluate(freqs, l.entries(), false);
  if (!e.ok) throw NumericalFailure("likelihood evaluation failed");
  return e.value;
}

Matrix likelihood_gradient(const EmpiricalTable& freqs, const KernelMatrix& l) {
  const auto e = evaluate(freqs, l.entries(), true);
  if (!e.ok) throw NumericalFailure("likelihood evaluation failed");
  return e.gradient;
}

// ---------------------------------------------------------- spectral box

Matrix project_to_spectral_box(const Matrix& l, double alpha, double beta) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(l);
  Vector lambda = eig.eigenvalues();
  bool inside = true;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double mu = lambda(i) / (1.0 + lambda(i));
    if (!(lambda(i) > 0.0) || mu < alpha || mu > beta) {
      inside = false;
      const double clipped = std::clamp(lambda(i) > 0.0 ? mu : alpha, alpha, beta);
      lambda(i) = clipped / (1.0 - clipped);
    }
  }
  if (inside) return l;
  const Matrix out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

// K̂ with K̂_ii = P̂[i ∈ Z] and |K̂_ij| from the pair inclusion frequencies,
// signs nonnegative, not yet clipped.
Matrix moment_correlation(const EmpiricalTable& freqs) {
  const int n = freqs.n;
  Matrix pair = Matrix::Zero(n, n);  // P̂[{i, j} ⊆ Z]
  for (std::size_t m = 0; m < freqs.freqs.size(); ++m) {
    const double w = freqs.freqs[m];
    if (w == 0.0) continue;
    const auto idx = mask_indices(static_cast<Bits>(m));
    for (int i : idx)
      for (int j : idx) pair(i, j) += w;
  }
  Matrix k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = pair(i, i);
    for (int j = 0; j < i; ++j)
      k(i, j) = k(j, i) = std::sqrt(std::max(0.0, pair(i, i) * pair(j, j) - pair(i, j)));
  }
  return k;
}

KernelMatrix clipped_to_l(const Matrix& k, const MleConfig& config) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  Vector mu = eig.eigenvalues();
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = std::clamp(mu(i), config.alpha, config.beta);
  const Matrix clipped = eig.eigenvectors() * mu.asDiagonal() * eig.eigenvectors().transpose();
  return k_to_l(CorrelationKernel(0.5 * (clipped + clipped.transpose())));
}

}  // namespace

KernelMatrix moment_init(const EmpiricalTable& freqs, const MleConfig& config) {
  return clipped_to_l(moment_correlation(freqs), config);
}

int sign_pattern_bits(int n) { return n < 3 ? 0 : (n - 1) * (n - 2) / 2; }

KernelMatrix sign_pattern_init(const EmpiricalTable& freqs, const MleConfig& config,
                               std::uint64_t pattern) {
  Matrix k = moment_correlation(freqs);
  int bit = 0;
  for (int i = 1; i < freqs.n; ++i)
    for (int j = i + 1; j < freqs.n; ++j, ++bit)
      if ((pattern >> bit) & 1U) k(i, j) = k(j, i) = -k(i, j);
  return clipped_to_l(k, config);
}

// ---------------------------------------------------------------- optimizer

namespace {

// θ holds the lower triangle of C column by column, diagonal entries as logs.
Vector to_params(const Matrix& l) {
  const auto n = l.rows();
  Eigen::LLT<Matrix> llt(l);
  if (llt.info() != Eigen::Success) throw NumericalFailure("iterate is not positive definite");
  const Matrix c = llt.matrixL();
  Vector theta(n * (n + 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) theta(p++) = i == j ? std::log(c(i, i)) : c(i, j);
  return theta;
}

Matrix factor_from_params(const Vector& theta, Eigen::Index n) {
  Matrix c = Matrix::Zero(n, n);
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) c(i, j) = i == j ? std::exp(theta(p++)) : theta(p++);
  return c;
}

Matrix kernel_from_factor(const Matrix& c) {
  Matrix l = c * c.transpose();
  return 0.5 * (l + l.transpose());
}

// dΦ̂/dθ from G = dΦ̂/dL: dΦ̂/dC = 2 G C on the lower triangle.
Vector param_gradient(const Matrix& g, const Matrix& c) {
  const auto n = c.rows();
  const Matrix gc = 2.0 * g * c;
  Vector out(n * (n + 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) out(p++) = i == j ? gc(i, i) * c(i, i) : gc(i, j);
  return out;
}

struct Restart {
  Matrix l;
  double value = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;
};

constexpr double kArmijo = 1e-4;
// Approximate Wolfe window (Hager-Zhang), used once Φ̂ differences reach
// roundoff level.
constexpr double kWolfeDelta = 0.1;
constexpr double kWolfeSigma = 0.9;
constexpr double kRoundoff = 1e-13;
constexpr int kMaxHalvings = 60;

Restart maximize(const EmpiricalTable& freqs, const Matrix& start, const MleConfig& config) {
  const auto n = start.rows();
  Restart out;
  out.l = project_to_spectral_box(start, config.alpha, config.beta);
  Vector theta = to_params(out.l);
  Evaluation current = evaluate(freqs, out.l, true);
  if (!current.ok) throw NumericalFailure("likelihood undefined at the starting point");
  Matrix c = factor_from_params(theta, n);
  // Minimize f = -Φ̂.
  Vector grad = -param_gradient(current.gradient, c);
  const auto dim = theta.size();
  Matrix inv_hessian = Matrix::Identity(dim, dim);
  bool identity_metric = true;
  out.history.push_back(current.value);

  for (int iter = 0; iter < config.max_iters; ++iter) {
    out.gradient_norm = current.gradient.norm();
    if (out.gradient_norm <= config.grad_tol) {
      out.converged = true;
      break;
    }
    Vector dir = -inv_hessian * grad;
    if (!(grad.dot(dir) < 0.0)) {
      inv_hessian.setIdentity();
      identity_metric = true;
      dir = -grad;
    }
    const double slope0 = grad.dot(dir);
    const double f0 = -current.value;
    double step = identity_metric ? std::min(1.0, 1.0 / dir.norm()) : 1.0;

    bool accepted = false;
    Vector theta_next, grad_next;
    Matrix l_next;
    Evaluation next;
    for (int h = 0; h < kMaxHalvings && !accepted; ++h, step *= 0.5) {
      theta_next = theta + step * dir;
      const Matrix raw = kernel_from_factor(factor_from_params(theta_next, n));
      l_next = project_to_spectral_box(raw, config.alpha, config.beta);
      const bool projected = !(l_next.array() == raw.array()).all();
      if (projected) {
        Eigen::LLT<Matrix> check(l_next);
        if (check.info() != Eigen::Success) continue;
        theta_next = to_params(l_next);
      }
      next = evaluate(freqs, l_next, true);
      if (!next.ok) continue;
      const double f1 = -next.value;
      grad_next = -param_gradient(next.gradient, factor_from_params(theta_next, n));
      const bool armijo = f1 <= f0 + kArmijo * grad.dot(theta_next - theta);
      bool approx_wolfe = false;
      if (!projected && f1 <= f0 + kRoundoff * std::abs(f0)) {
        const double slope1 = grad_next.dot(dir);
        approx_wolfe = slope1 >= kWolfeSigma * slope0 && slope1 <= (2.0 * kWolfeDelta - 1.0) * slope0;
      }
      accepted = armijo || approx_wolfe;
    }
    if (!accepted) {
      if (identity_metric) break;  // stalled even along steepest ascent
      inv_hessian.setIdentity();
      identity_metric = true;
      continue;
    }

    const Vector s = theta_next - theta;
    const Vector y = grad_next - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity_metric) inv_hessian *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Matrix left = Matrix::Identity(dim, dim) - rho * s * y.transpose();
      inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
      identity_metric = false;
    }
    theta = theta_next;
    grad = grad_next;
    out.l = l_next;
    current = std::move(next);
    out.history.push_back(current.value);
    out.iterations = iter + 1;
  }
  out.value = current.value;
  out.gradient_norm = current.gradient.norm();
  out.converged = out.gradient_norm <= config.grad_tol;
  return out;
}

Matrix jittered(const Matrix& base, double scale, StreamEngine& engine) {
  std::normal_distribution<double> normal;
  const auto n = base.rows();
  Matrix noise(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i)
      noise(i, j) = noise(j, i) = normal(engine) * std::sqrt(base(i, i) * base(j, j));
  for (int attempt = 0; attempt < 40; ++attempt, scale *= 0.5) {
    const Matrix candidate = base + scale * noise;
    Eigen::LLT<Matrix> llt(candidate);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0)
      return candidate;
  }
  return base;
}

}  // namespace

MleResult fit_mle(const EmpiricalTable& freqs, const MleConfig& config) {
  config.validate();
  if (freqs.freqs.size() != (std::size_t{1} << freqs.n))
    throw InvalidKernel("frequency table has the wrong length");
  const Matrix base = moment_init(freqs, config).entries();
  // Restarts first walk the sign classes of K̂ (patterns beyond 2^16 are
  // never reached in practice), then fall back to jitter.
  const int bits = std::min(sign_pattern_bits(freqs.n), 16);
  const int patterns = 1 << bits;

  std::optional<Restart> best;
  int best_index = 0;
  for (int r = 0; r < config.restarts; ++r) {
    Matrix start = base;
    if (r > 0 && r < patterns) {
      start = sign_pattern_init(freqs, config, static_cast<std::uint64_t>(r)).entries();
    } else if (r > 0) {
      StreamEngine engine(config.seed, static_cast<std::uint64_t>(r));
      start = jittered(base, config.init_jitter, engine);
    }
    Restart run = maximize(freqs, start, config);
    if (!best || run.value > best->value) {
      best = std::move(run);
      best_index = r;
    }
  }
  MleResult result{KernelMatrix(best->l), 0.0, 0, false, 0, 0.0, {}};
  result.log_likelihood = best->value;
  result.iterations = best->iterations;
  result.converged = best->converged;
  result.restart_index = best_index;
  result.gradient_norm = best->gradient_norm;
  result.history = std::move(best->history);
  return result;
}

// ---------------------------------------------------------------- losses

LossValue sign_orbit_loss(const Matrix& l_hat, const Matrix& l_star) {
  const auto n = static_cast<int>(l_star.rows());
  if (l_hat.rows() != n || l_hat.cols() != n || l_star.cols() != n)
    throw InvalidKernel("loss: matrix sizes differ");
  if (n > kMaxSignEnumeration) throw GroundSetTooLarge(n, kMaxSignEnumeration);
  const Bits classes = Bits{1} << (n - 1);
  double best = std::numeric_limits<double>::infinity();
  Bits best_code = 0;
  std::vector<int> s(static_cast<std::size_t>(n));
  // Code bit (n-1-i) flips index i, so increasing codes walk sign vectors in
  // lexicographic order with + before -.
  for (Bits code = 0; code < classes; ++code) {
    for (int i = 0; i < n; ++i)
      s[static_cast<std::size_t>(i)] = (i > 0 && ((code >> (n - 1 - i)) & 1U)) ? -1 : 1;
    double acc = 0.0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double d = l_hat(i, j) - s[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(j)] * l_star(i, j);
        acc += d * d;
      }
    if (acc < best) {
      best = acc;
      best_code = code;
    }
  }
  for (int i = 0; i < n; ++i)
    s[static_cast<std::size_t>(i)] = (i > 0 && ((best_code >> (n - 1 - i)) & 1U)) ? -1 : 1;
  return {std::sqrt(best), SignDiagonal(s)};
}

BlockwiseLoss blockwise_loss(const Matrix& l_hat, const Matrix& l_star,
                             const DeterminantalGraph& star_graph) {
  const auto loss = sign_orbit_loss(l_hat, l_star);
  const Matrix diff = l_hat - conjugate_by_signs(l_star, loss.argmin_signs);
  BlockwiseLoss out;
  out.total = loss.value;
  out.signs = loss.argmin_signs;
  double within = 0.0, cross = 0.0;
  for (int j = 0; j < star_graph.n; ++j)
    for (int i = 0; i < star_graph.n; ++i)
      (star_graph.same_component(i, j) ? within : cross) += diff(i, j) * diff(i, j);
  out.within = std::sqrt(within);
  out.cross = std::sqrt(cross);
  return out;
}

// ------------------------------------------------------------------- risk

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

nlohmann::json to_json(const RiskEstimate& r) {
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& o : r.per_replicate)
    reps.push_back({{"loss", o.loss}, {"within", o.within}, {"cross", o.cross},
                    {"converged", o.converged}, {"iterations", o.iterations}});
  return {{"sample_size", r.sample_size},     {"replicates", r.replicates},
          {"seed", r.seed},                   {"mean_loss", r.mean_loss},
          {"std_error", r.std_error},         {"median_loss", r.median_loss},
          {"mean_within", r.mean_within},     {"mean_cross", r.mean_cross},
          {"median_within", r.median_within}, {"median_cross", r.median_cross},
          {"nonconverged", r.nonconverged},   {"per_replicate", reps}};
}

RiskEstimate estimate_risk(const KernelMatrix& l_star, std::size_t sample_size,
                           int replicates, const MleConfig& config, std::uint64_t seed,
                           const RiskOptions& options) {
  if (replicates < 2) throw ConfigError("risk: replicates must be at least 2");
  if (sample_size < 1) throw ConfigError("risk: sample size must be at least 1");
  config.validate();
  const DppTable table = build_table(l_star, TableOptions{20, Exec::serial});
  const auto graph = determinantal_graph(l_star);
  const Estimator estimator = options.estimator ? options.estimator : Estimator(fit_mle);

  RiskEstimate out;
  out.sample_size = sample_size;
  out.replicates = replicates;
  out.seed = seed;
  out.per_replicate.resize(static_cast<std::size_t>(replicates));
  std::vector<std::string> errors(static_cast<std::size_t>(replicates));
  std::vector<int> error_codes(static_cast<std::size_t>(replicates), 0);

  for_each_index(replicates, options.exec, [&](std::int64_t r) {
    const auto idx = static_cast<std::size_t>(r);
    try {
      const auto batch = sample(table, sample_size, seed, static_cast<std::uint64_t>(r), Exec::serial);
      MleConfig replicate_config = config;
      replicate_config.seed = mix64(config.seed ^ mix64(static_cast<std::uint64_t>(r)));
      const MleResult fit = estimator(empirical_table(batch), replicate_config);
      const auto loss = blockwise_loss(fit.estimate.entries(), l_star.entries(), graph);
      out.per_replicate[idx] = {loss.total, loss.within, loss.cross, fit.converged, fit.iterations};
    } catch (const Error& e) {
      errors[idx] = e.what();
      error_codes[idx] = static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
      errors[idx] = e.what();
      error_codes[idx] = static_cast<int>(ExitCode::numerical_failure);
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty())
      throw Error("replicate " + std::to_string(i) + ": " + errors[i],
                  static_cast<ExitCode>(error_codes[i]));

  std::vector<double> losses, within, cross;
  for (const auto& o : out.per_replicate) {
    losses.push_back(o.loss);
    within.push_back(o.within);
    cross.push_back(o.cross);
    if (!o.converged) ++out.nonconverged;
  }
  const double count = replicates;
  out.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / count;
  out.mean_within = std::accumulate(within.begin(), within.end(), 0.0) / count;
  out.mean_cross = std::accumulate(cross.begin(), cross.end(), 0.0) / count;
  double ss = 0.0;
  for (double v : losses) ss += (v - out.mean_loss) * (v - out.mean_loss);
  out.std_error = std::sqrt(ss / (count - 1.0)) / std::sqrt(count);
  out.median_loss = median(losses);
  out.median_within = median(within);
  out.median_cross = median(cross);
  return out;
}

Matrix asymptotic_covariance(const KernelMatrix& l_star, Exec exec) {
  if (!determinantal_graph(l_star).irreducible()) throw SingularInformation(0.0);
  const auto table = build_table(l_star, TableOptions{kMaxHessianGroundSet, exec});
  const auto form = hessian_matrix(table, exec);
  // -M has eigenvalues -λ with the same eigenvectors, ascending order reversed.
  const Vector info = -form.eigenvalues;
  const double smallest = info.minCoeff();
  const double largest = info.maxCoeff();
  if (!(smallest > 1e-10 * std::max(1.0, largest))) throw SingularInformation(smallest);
  const Matrix v = form.eigenvectors * info.cwiseInverse().asDiagonal() *
                   form.eigenvectors.transpose();
  return 0.5 * (v + v.transpose());
}

}  // namespace dppmle
