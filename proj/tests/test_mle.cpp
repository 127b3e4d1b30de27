#include <doctest.h>

#include <cmath>
#include <random>

#include "dppmle/errors.hpp"
#include "dppmle/experiments.hpp"
#include "dppmle/info_geometry.hpp"
#include "dppmle/mle.hpp"
#include "dppmle/reference.hpp"
#include "oracles.hpp"

using namespace dppmle;

namespace {

KernelMatrix scalar(double v) { return KernelMatrix(Matrix::Constant(1, 1, v)); }

EmpiricalTable weights(int n, std::vector<double> f) { return EmpiricalTable{n, std::move(f), 0}; }

KernelMatrix blocks_12_3() {
  return block_diagonal_kernel({tridiagonal_kernel(2, 2.0, 0.5), scalar(2.0)});
}

}  // namespace

TEST_CASE("config") {
  MleConfig c;
  CHECK_NOTHROW(c.validate());
  const auto back = mle_config_from_json(to_json(c));
  CHECK(back.alpha == c.alpha);
  CHECK(back.restarts == c.restarts);
  CHECK_THROWS_AS(mle_config_from_json({{"restart", 3}}), ConfigError);
  CHECK_THROWS_AS(mle_config_from_json({{"alpha", 0.7}, {"beta", 0.6}}), ConfigError);
  CHECK_THROWS_AS(mle_config_from_json({{"restarts", 0}}), ConfigError);
  CHECK(mle_config_from_json({{"seed", 9}}).seed == 9);
}

TEST_CASE("empirical log-likelihood") {
  CHECK(empirical_log_likelihood(weights(1, {0, 1}), scalar(1)) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 rng(51);
  for (int n = 1; n <= 5; ++n) {
    const KernelMatrix ls = random_kernel(n, rng);
    const auto star = build_table(ls);
    const KernelMatrix l = random_kernel(n, rng);
    CHECK(std::fabs(empirical_log_likelihood(exact_frequencies(star), l) - expected_log_likelihood(star, l)) <= 1e-12);
  }
}

TEST_CASE("likelihood gradient") {
  // n = 1: G = p̂/L - 1/(1 + L).
  CHECK(std::fabs(likelihood_gradient(weights(1, {0.5, 0.5}), scalar(1))(0, 0)) <= 1e-15);
  CHECK(likelihood_gradient(weights(1, {0.5, 0.5}), scalar(3))(0, 0) == doctest::Approx(-1.0 / 12.0).epsilon(1e-14));

  std::mt19937_64 rng(52);
  for (int n = 1; n <= 5; ++n) {
    const KernelMatrix ls = random_kernel(n, rng);
    const auto star = build_table(ls);
    CHECK(likelihood_gradient(exact_frequencies(star), ls).norm() <= 1e-10);

    const auto freqs = empirical_table(sample(star, 500, 7));
    const KernelMatrix l = random_kernel(n, rng, 0.5, 2.5);
    const Matrix g = likelihood_gradient(freqs, l);
    CHECK((g - reference::likelihood_gradient(freqs.freqs, l.entries())).norm() <= 1e-12 * std::max(1.0, g.norm()));
    const auto h = random_direction(n, rng);
    auto f = [&](long double t) { return oracle::phi_along(freqs.freqs, l.entries(), h.entries(), t); };
    const double fd = oracle::richardson(f, 1, oracle::fd_step(1)).value;
    CHECK(oracle::relative_gap((g * h.entries()).trace(), fd) <= 1e-5);
  }
}

TEST_CASE("spectral box projection") {
  std::mt19937_64 rng(53);
  const KernelMatrix l = random_kernel(3, rng);
  CHECK(project_to_spectral_box(l.entries(), 1e-4, 1 - 1e-4) == l.entries());
  const Matrix big = 1e6 * Matrix::Identity(2, 2);
  const Matrix clipped = project_to_spectral_box(big, 1e-4, 0.9);
  CHECK(clipped(0, 0) == doctest::Approx(9.0).epsilon(1e-10));
}

TEST_CASE("moment initializer") {
  const Matrix diag = Vector::LinSpaced(3, 0.5, 2.0).asDiagonal();
  const KernelMatrix m = moment_init(exact_frequencies(build_table(KernelMatrix(diag))), MleConfig{});
  CHECK((m.entries() - diag).cwiseAbs().maxCoeff() <= 1e-10);

  Matrix l(2, 2);
  l << 1, 0.5, 0.5, 1;
  const KernelMatrix m2 = moment_init(exact_frequencies(build_table(KernelMatrix(l))), MleConfig{});
  const double k12 = l_to_k(KernelMatrix(l)).entries()(0, 1);
  CHECK(std::fabs(std::fabs(l_to_k(m2).entries()(0, 1)) - std::fabs(k12)) <= 1e-10);

  // Degenerate data still yields a valid kernel.
  CHECK_NOTHROW(moment_init(weights(2, {0, 0, 0, 1}), MleConfig{}));
  CHECK_NOTHROW(moment_init(weights(2, {1, 0, 0, 0}), MleConfig{}));
}

TEST_CASE("sign pattern starts") {
  CHECK(sign_pattern_bits(2) == 0);
  CHECK(sign_pattern_bits(3) == 1);
  CHECK(sign_pattern_bits(4) == 3);
  const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
  const auto f = exact_frequencies(build_table(t));
  const Matrix k0 = l_to_k(sign_pattern_init(f, MleConfig{}, 0)).entries();
  const Matrix k1 = l_to_k(sign_pattern_init(f, MleConfig{}, 1)).entries();
  CHECK(sign_pattern_init(f, MleConfig{}, 0).entries() == moment_init(f, MleConfig{}).entries());
  // Pattern 1 flips K̂_12 only (0-based indices 1, 2).
  CHECK(k0(1, 2) * k1(1, 2) < 0.0);
  CHECK(k0(0, 1) * k1(0, 1) > 0.0);
}

TEST_CASE("sign-orbit loss") {
  Matrix ls(2, 2);
  ls << 1, 0.5, 0.5, 1;
  const auto self = sign_orbit_loss(ls, ls);
  CHECK(self.value == 0.0);
  CHECK(self.argmin_signs == SignDiagonal::identity(2));

  Matrix lh = ls;
  lh(0, 0) += 0.1;
  const auto v = sign_orbit_loss(lh, ls);
  CHECK(v.value == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(v.argmin_signs.signs() == std::vector<int>{1, 1});
  // The flipped class: both off-diagonals differ by 1, so sqrt(0.01 + 2).
  CHECK((lh - conjugate_by_signs(ls, SignDiagonal({1, -1}))).norm() == doctest::Approx(std::sqrt(2.01)).epsilon(1e-14));

  std::mt19937_64 rng(54);
  for (int n = 1; n <= 6; ++n) {
    const KernelMatrix l = random_kernel(n, rng);
    for (Bits f = 0; f < (Bits{1} << n); ++f)
      CHECK(sign_orbit_loss(conjugate_by_signs(l, SignDiagonal::from_flips(f, n)), l).value == 0.0);
  }

  // Ties go to + before -: a diagonal truth leaves every class tied.
  const auto tie = sign_orbit_loss(Matrix(2 * Matrix::Identity(3, 3)), Matrix(Matrix::Identity(3, 3)));
  CHECK(tie.argmin_signs.signs() == std::vector<int>{1, 1, 1});
}

TEST_CASE("blockwise loss") {
  const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
  Matrix p = t.entries();
  p(0, 0) += 0.3;
  const auto irr = blockwise_loss(p, t.entries(), determinantal_graph(t));
  CHECK(irr.cross == 0.0);
  CHECK(irr.within == doctest::Approx(0.3));

  const KernelMatrix b = blocks_12_3();
  const auto g = determinantal_graph(b);
  const auto zero = blockwise_loss(b.entries(), b.entries(), g);
  CHECK(zero.within == 0.0);
  CHECK(zero.cross == 0.0);

  const double eps = 1e-3;
  Matrix q = b.entries();
  q(0, 2) = q(2, 0) = eps;
  q(1, 2) = q(2, 1) = eps;
  const auto c = blockwise_loss(q, b.entries(), g);
  CHECK(c.within == 0.0);
  CHECK(c.cross == doctest::Approx(eps * std::sqrt(2.0 * 2.0)).epsilon(1e-12));
  CHECK(c.total == doctest::Approx(std::hypot(c.within, c.cross)).epsilon(1e-12));
}

TEST_CASE("fit_mle") {
  SUBCASE("scalar closed form") {
    const auto r = fit_mle(weights(1, {0.5, 0.5}), MleConfig{});
    CHECK(r.estimate(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.converged);
  }
  SUBCASE("population likelihood recovers the orbit") {
    std::mt19937_64 rng(55);
    for (int n = 2; n <= 4; ++n) {
      const KernelMatrix ls = random_kernel(n, rng);
      const auto r = fit_mle(exact_frequencies(build_table(ls)), MleConfig{});
      CAPTURE(n);
      CHECK(sign_orbit_loss(r.estimate, ls).value <= 1e-4);
      CHECK(r.gradient_norm <= 1e-8);
    }
    const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
    CHECK(sign_orbit_loss(fit_mle(exact_frequencies(build_table(t)), MleConfig{}).estimate, t).value <= 1e-4);
  }
  SUBCASE("more restarts never lose") {
    std::mt19937_64 rng(56);
    const KernelMatrix ls = random_kernel(5, rng);
    const auto freqs = empirical_table(sample(build_table(ls), 300, 3));
    MleConfig one, five;
    one.restarts = 1;
    five.restarts = 5;
    const auto r1 = fit_mle(freqs, one);
    const auto r5 = fit_mle(freqs, five);
    CHECK(r5.log_likelihood >= r1.log_likelihood);
    // Optimizer output dominates arbitrary points.
    for (int t = 0; t < 10; ++t)
      CHECK(empirical_log_likelihood(freqs, random_kernel(5, rng)) <= r5.log_likelihood);
    // History is monotone.
    for (std::size_t i = 1; i < r5.history.size(); ++i) CHECK(r5.history[i] >= r5.history[i - 1] - 1e-12);
  }
  SUBCASE("deterministic") {
    const auto freqs = empirical_table(sample(build_table(tridiagonal_kernel(3, 2.0, 0.5)), 1000, 5));
    const auto a = fit_mle(freqs, MleConfig{});
    const auto b = fit_mle(freqs, MleConfig{});
    CHECK(a.estimate.entries() == b.estimate.entries());
  }
}

TEST_CASE("risk estimation") {
  const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
  SUBCASE("oracle estimator") {
    RiskOptions opts;
    opts.estimator = oracle_estimator(t);
    const auto r = estimate_risk(t, 500, 10, MleConfig{}, 1, opts);
    CHECK(r.mean_loss == 0.0);
    CHECK(r.median_loss == 0.0);
    CHECK(r.nonconverged == 0);
  }
  SUBCASE("thread independence and first-k stability") {
    RiskOptions serial;
    serial.exec = Exec::serial;
    const auto a = estimate_risk(t, 300, 8, MleConfig{}, 2, serial);
    const auto b = estimate_risk(t, 300, 8, MleConfig{}, 2);
    const auto big = estimate_risk(t, 300, 12, MleConfig{}, 2);
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(a.per_replicate[i].loss == b.per_replicate[i].loss);
      CHECK(a.per_replicate[i].loss == big.per_replicate[i].loss);
    }
    CHECK(a.mean_loss == b.mean_loss);
  }
  SUBCASE("median risk is nonincreasing in n") {
    double previous = INFINITY;
    for (std::size_t n : {1000, 10000, 100000}) {
      const auto r = estimate_risk(t, n, 50, MleConfig{}, 3);
      CHECK(r.median_loss <= previous);
      previous = r.median_loss;
    }
  }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(estimate_risk(t, 0, 5, MleConfig{}, 1), ConfigError);
    CHECK_THROWS_AS(estimate_risk(t, 10, 0, MleConfig{}, 1), ConfigError);
  }
}

TEST_CASE("asymptotic covariance is the inverse information") {
  const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
  const Matrix v = asymptotic_covariance(t);
  const Matrix m = hessian_matrix(build_table(t)).matrix;
  CHECK((v * (-m) - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() <= 1e-8);
  // Trace frozen from an independent numpy inverse of the enumerated covariance.
  CHECK(v.trace() == doctest::Approx(16422.708333333387).epsilon(1e-9));
}
