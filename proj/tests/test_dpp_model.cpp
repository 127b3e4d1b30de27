#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dppmle/dpp_model.hpp"
#include "dppmle/errors.hpp"
#include "dppmle/rng.hpp"
#include "oracles.hpp"

using namespace dppmle;

namespace {

KernelMatrix scalar(double v) { return KernelMatrix(Matrix::Constant(1, 1, v)); }

}  // namespace

TEST_CASE("counter rng") {
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);  // SplitMix64 reference output for state 0
  const CounterRng a(7, 0), b(7, 0), c(7, 1);
  CHECK(a.bits_at(12) == b.bits_at(12));
  CHECK(a.bits_at(12) != c.bits_at(12));
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = a.uniform_at(i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  StreamEngine e(7, 0);
  CHECK(e() == a.bits_at(0));
  CHECK(e() == a.bits_at(1));
}

TEST_CASE("subset probabilities") {
  CHECK(subset_probability(scalar(1), SubsetMask(0, 1)) == doctest::Approx(0.5));
  CHECK(subset_probability(scalar(1), SubsetMask(1, 1)) == doctest::Approx(0.5));
  const KernelMatrix id(Matrix::Identity(2, 2));
  for (Bits j = 0; j < 4; ++j) CHECK(subset_probability(id, SubsetMask(j, 2)) == doctest::Approx(0.25));

  // det(I + L) for tridiagonal(3, 2, 0.5) by Leibniz: 3·(9 - 0.25) - 0.5·1.5 = 25.5
  const KernelMatrix t = tridiagonal_kernel(3, 2.0, 0.5);
  const double z = static_cast<double>(oracle::leibniz_det(Matrix::Identity(3, 3) + t.entries()));
  CHECK(z == doctest::Approx(25.5).epsilon(1e-15));
  CHECK(subset_probability(t, SubsetMask::empty(3)) == doctest::Approx(1.0 / 25.5).epsilon(1e-14));
}

TEST_CASE("table invariants") {
  const auto table = build_table(KernelMatrix(Matrix::Identity(2, 2)));
  for (double p : table.probs()) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));

  std::mt19937_64 rng(31);
  for (int n = 1; n <= 8; ++n) {
    const KernelMatrix l = random_kernel(n, rng);
    const auto t = build_table(l);
    const double sum = std::accumulate(t.probs().begin(), t.probs().end(), 0.0);
    CHECK(std::fabs(sum - 1.0) <= 1e-10);
    for (double p : t.probs()) CHECK(p > 0.0);
    CHECK(std::fabs(t.prob(0) * t.normalizer() - 1.0) <= 1e-10);
    CHECK(t.identity_residual() <= 1e-9);
    if (n <= 6) {
      const auto expected = oracle::leibniz_probs(l.entries());
      for (Bits j = 0; j < t.size(); ++j) CHECK(t.prob(j) == doctest::Approx(expected[j]).epsilon(1e-11));
    }
  }
}

TEST_CASE("tables are invariant under sign conjugation") {
  std::mt19937_64 rng(32);
  for (int n = 2; n <= 6; ++n) {
    const KernelMatrix l = random_kernel(n, rng);
    const auto base = build_table(l);
    for (Bits flips = 0; flips < (Bits{1} << n); ++flips) {
      const auto other = build_table(conjugate_by_signs(l, SignDiagonal::from_flips(flips, n)));
      double worst = 0.0;
      for (Bits j = 0; j < base.size(); ++j) worst = std::max(worst, std::fabs(base.prob(j) - other.prob(j)));
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("table budget") {
  TableOptions opts;
  opts.max_ground_set = 4;
  CHECK_THROWS_AS(build_table(KernelMatrix(Matrix::Identity(5, 5)), opts), GroundSetTooLarge);
}

TEST_CASE("inclusion probabilities") {
  const KernelMatrix id(Matrix::Identity(2, 2));
  CHECK(inclusion_probability(id, SubsetMask::empty(2)) == doctest::Approx(1.0));
  CHECK(inclusion_probability(id, SubsetMask(1, 2)) == doctest::Approx(0.5));

  std::mt19937_64 rng(33);
  const KernelMatrix l = random_kernel(6, rng);
  const auto table = build_table(l);
  for (Bits s = 0; s < 64; ++s) {
    const SubsetMask mask(s, 6);
    CHECK(std::fabs(inclusion_probability(l, mask) - inclusion_probability(table, mask)) <= 1e-10);
  }
}

TEST_CASE("empty probability") {
  CHECK(empty_probability(KernelMatrix(Matrix::Identity(2, 2))) == doctest::Approx(0.25));
  CHECK(empty_probability(scalar(3)) == doctest::Approx(0.25));
  std::mt19937_64 rng(34);
  const KernelMatrix l = random_kernel(7, rng);
  const double a = empty_probability(l);
  const double b = build_table(l).prob(0);
  CHECK(std::fabs(a - b) <= 1e-12 * b);
}

TEST_CASE("sampler") {
  SUBCASE("n = 1 binomial bound") {
    const auto batch = sample(build_table(scalar(1)), 100000, 4);
    const double f = static_cast<double>(batch.counts[1]) / 100000.0;
    CHECK(std::fabs(f - 0.5) <= 0.005);
  }
  SUBCASE("determinism and thread independence") {
    const auto table = build_table(KernelMatrix(Matrix::Identity(2, 2)));
    const auto a = sample(table, 4, 99, 0, Exec::serial);
    const auto b = sample(table, 4, 99, 0, Exec::parallel);
    CHECK(a.draws == b.draws);
    CHECK(a.counts == b.counts);
    CHECK(a.count() == 4);
    const auto c = sample(table, 4, 99, 1);
    const auto longer = sample(table, 8, 99, 0);
    CHECK(std::equal(a.draws.begin(), a.draws.end(), longer.draws.begin()));
    (void)c;
  }
  SUBCASE("law of large numbers") {
    std::mt19937_64 rng(35);
    const auto table = build_table(random_kernel(3, rng));
    auto sup = [&](std::size_t count) {
      const auto f = empirical_table(sample(table, count, 8));
      double worst = 0.0;
      for (Bits j = 0; j < table.size(); ++j) worst = std::max(worst, std::fabs(f.freqs[j] - table.prob(j)));
      return worst;
    };
    CHECK(sup(100000) < sup(1000));
    CHECK(sup(100000) < 0.01);
  }
}

TEST_CASE("empirical tables") {
  SampleBatch one;
  one.n = 2;
  one.draws = {0b10u};
  one.counts = {0, 0, 1, 0};
  const auto f = empirical_table(one);
  CHECK(f.freqs == std::vector<double>{0, 0, 1, 0});
  CHECK(f.sample_count == 1);

  SampleBatch four;
  four.n = 2;
  four.draws = {0, 1, 2, 3};
  four.counts = {1, 1, 1, 1};
  for (double v : empirical_table(four).freqs) CHECK(v == 0.25);

  SampleBatch none;
  none.n = 2;
  none.counts = {0, 0, 0, 0};
  CHECK_THROWS_AS(empirical_table(none), EmptyBatch);

  const auto exact = exact_frequencies(build_table(KernelMatrix(Matrix::Identity(2, 2))));
  CHECK(exact.sample_count == 0);
}

TEST_CASE("serialization roundtrips") {
  const auto table = build_table(tridiagonal_kernel(3, 2.0, 0.5));
  const auto batch = sample(table, 50, 1, 2);
  const auto back = sample_batch_from_json(to_json(batch));
  CHECK(back.draws == batch.draws);
  CHECK(back.counts == batch.counts);
  CHECK(back.seed == 1);
  CHECK(back.stream == 2);

  auto bad = to_json(batch);
  bad["n"] = 2;
  CHECK_THROWS_AS(sample_batch_from_json(bad), ConfigError);

  std::stringstream csv;
  write_probability_csv(csv, table.probs());
  const auto read = read_probability_csv(csv);
  CHECK(read.n == 3);
  CHECK(read.sample_count == 0);
  for (Bits j = 0; j < 8; ++j) CHECK(read.freqs[j] == table.prob(j));  // 17 digits roundtrip exactly

  std::stringstream broken("mask,probability\n0,0.5\n1,0.25\n2,0.25\n");
  CHECK_THROWS_AS(read_probability_csv(broken), ConfigError);
}
