#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dppmle/dpp_model.hpp"
#include "dppmle/kernel_algebra.hpp"

namespace dppmle {

struct MleConfig {
  /// Eigenvalues of K = L(I+L)^{-1} are kept inside [alpha, beta].
  double alpha = 1e-4;
  double beta = 1.0 - 1e-4;
  int restarts = 8;
  int max_iters = 2000;
  /// Convergence when the Frobenius norm of dΦ̂/dL drops below this.
  double grad_tol = 1e-8;
  /// Restarts >= 1 perturb the moment estimate by this much, relative to the
  /// diagonal scale.
  double init_jitter = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const MleConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
MleConfig mle_config_from_json(const nlohmann::json& j);

struct MleResult {
  KernelMatrix estimate;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  int restart_index = 0;
  double gradient_norm = 0.0;
  /// Φ̂ before the first step and after every accepted step of the winning
  /// restart.
  std::vector<double> history;
};

nlohmann::json to_json(const MleResult& r);

/// Σ_J p̂_J log det(L_J) - log det(I + L); subsets with p̂_J = 0 contribute 0.
double empirical_log_likelihood(const EmpiricalTable& freqs, const KernelMatrix& l);

/// G = Σ_J p̂_J [L_J^{-1}]_padded - (I + L)^{-1}, so dΦ̂(L)(H) = Tr(G H).
Matrix likelihood_gradient(const EmpiricalTable& freqs, const KernelMatrix& l);

/// Moment estimate of K from singleton and pair inclusion frequencies,
/// spectrum clipped to [alpha, beta], mapped back to L.
KernelMatrix moment_init(const EmpiricalTable& freqs, const MleConfig& config);

/// Number of free off-diagonal sign bits of K modulo D K D: the entries
/// (i, j) with 1 <= i < j, i.e. those off the star tree at index 0.
int sign_pattern_bits(int n);

/// moment_init with the signs of K̂_ij (1 <= i < j) flipped where `pattern`
/// has a set bit, in row-major order of those pairs.
KernelMatrix sign_pattern_init(const EmpiricalTable& freqs, const MleConfig& config,
                               std::uint64_t pattern);

/// Clips the spectrum of K = L(I+L)^{-1} into [alpha, beta]. Returns L
/// unchanged when it is already inside the box.
Matrix project_to_spectral_box(const Matrix& l, double alpha, double beta);

/// Maximizes Φ̂ over the spectral box with BFGS in Cholesky coordinates
/// (L = C Cᵀ, log-diagonal). Restart 0 starts at moment_init, restarts
/// 1 .. 2^b - 1 at sign_pattern_init(r) (b = sign_pattern_bits(n), capped at
/// 16), later ones at a jittered moment_init. Returns the best restart;
/// `converged` is false if no restart met grad_tol.
MleResult fit_mle(const EmpiricalTable& freqs, const MleConfig& config);

struct LossValue {
  double value = 0.0;
  SignDiagonal argmin_signs = SignDiagonal::identity(1);
};

/// Largest n for exhaustive sign enumeration.
inline constexpr int kMaxSignEnumeration = 20;

/// min_D ‖L̂ - D L* D‖_F over the 2^{n-1} sign classes (signs[0] = +1), ties
/// going to the lexicographically first sign vector with + before -.
LossValue sign_orbit_loss(const Matrix& l_hat, const Matrix& l_star);
inline LossValue sign_orbit_loss(const KernelMatrix& l_hat, const KernelMatrix& l_star) {
  return sign_orbit_loss(l_hat.entries(), l_star.entries());
}

/// The loss split into positions inside the blocks of L* and positions
/// across blocks, both taken at the sign vector minimizing the total loss.
struct BlockwiseLoss {
  double total = 0.0;
  double within = 0.0;
  double cross = 0.0;
  SignDiagonal signs = SignDiagonal::identity(1);
};

BlockwiseLoss blockwise_loss(const Matrix& l_hat, const Matrix& l_star,
                             const DeterminantalGraph& star_graph);

/// Replaceable estimator, e.g. an oracle returning L* in tests.
using Estimator = std::function<MleResult(const EmpiricalTable&, const MleConfig&)>;

struct ReplicateOutcome {
  double loss = 0.0;
  double within = 0.0;
  double cross = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct RiskEstimate {
  std::size_t sample_size = 0;
  int replicates = 0;
  std::uint64_t seed = 0;
  double mean_loss = 0.0;
  double std_error = 0.0;
  double median_loss = 0.0;
  double mean_within = 0.0;
  double mean_cross = 0.0;
  double median_within = 0.0;
  double median_cross = 0.0;
  int nonconverged = 0;
  std::vector<ReplicateOutcome> per_replicate;
};

nlohmann::json to_json(const RiskEstimate& r);

struct RiskOptions {
  Exec exec = Exec::parallel;
  /// Defaults to fit_mle.
  Estimator estimator;
};

/// Monte Carlo risk: replicate r draws `sample_size` subsets from stream
/// (seed, r), fits, and scores the estimate. Replicates run concurrently and
/// are gathered by index.
RiskEstimate estimate_risk(const KernelMatrix& l_star, std::size_t sample_size,
                           int replicates, const MleConfig& config, std::uint64_t seed,
                           const RiskOptions& options = {});

/// V(L*) = (-d²Φ(L*))^{-1} in the orthonormal symmetric basis. Throws
/// SingularInformation when the smallest eigenvalue of -d²Φ(L*) is at most
/// 1e-10 · max(1, largest).
Matrix asymptotic_covariance(const KernelMatrix& l_star, Exec exec = Exec::parallel);

}  // namespace dppmle
