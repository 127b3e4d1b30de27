#include "dppmle/dpp_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "dppmle/errors.hpp"
#include "dppmle/rng.hpp"

namespace dppmle {

DppTable::DppTable(KernelMatrix kernel, std::vector<double> log_dets,
                   std::vector<double> probs, double log_normalizer,
                   double identity_residual)
    : kernel_(std::move(kernel)),
      log_dets_(std::move(log_dets)),
      probs_(std::move(probs)),
      log_normalizer_(log_normalizer),
      identity_residual_(identity_residual) {}

double DppTable::normalizer() const { return std::exp(log_normalizer_); }

DppTable build_table(const KernelMatrix& l, const TableOptions& options) {
  const int n = l.size();
  if (n > options.max_ground_set) throw GroundSetTooLarge(n, options.max_ground_set);
  auto log_dets = principal_log_dets(l.entries(), options.exec);

  const double top = *std::max_element(log_dets.begin(), log_dets.end());
  double scaled_sum = 0.0;
  for (double v : log_dets) scaled_sum += std::exp(v - top);
  const double log_sum = top + std::log(scaled_sum);

  const double log_normalizer =
      log_det_spd(Matrix::Identity(n, n) + l.entries());
  const double residual = std::abs(std::expm1(log_sum - log_normalizer));
  if (!(residual <= 1e-6)) throw NormalizationMismatch(residual);

  std::vector<double> probs(log_dets.size());
  for_each_index(static_cast<std::int64_t>(probs.size()), options.exec,
                 [&](std::int64_t m) {
                   probs[static_cast<std::size_t>(m)] =
                       std::exp(log_dets[static_cast<std::size_t>(m)] - log_sum);
                 });
  return DppTable(l, std::move(log_dets), std::move(probs), log_normalizer, residual);
}

double subset_probability(const KernelMatrix& l, SubsetMask j) {
  const int n = l.size();
  if (j.ground_size() != n) throw InvalidKernel("subset ground size mismatch");
  const double log_minor = log_det_spd(principal_submatrix(l.entries(), j));
  return std::exp(log_minor - log_det_spd(Matrix::Identity(n, n) + l.entries()));
}

double inclusion_probability(const KernelMatrix& l, SubsetMask s) {
  if (s.ground_size() != l.size()) throw InvalidKernel("subset ground size mismatch");
  if (s.bits() == 0) return 1.0;
  const auto k = l_to_k(l);
  return std::exp(log_det_spd(principal_submatrix(k.entries(), s)));
}

double inclusion_probability(const DppTable& table, SubsetMask s) {
  if (s.ground_size() != table.ground_size())
    throw InvalidKernel("subset ground size mismatch");
  const Bits need = s.bits();
  double acc = 0.0;
  for (std::size_t m = 0; m < table.size(); ++m)
    if ((static_cast<Bits>(m) & need) == need) acc += table.probs()[m];
  return acc;
}

double empty_probability(const KernelMatrix& l) {
  const int n = l.size();
  const auto k = l_to_k(l);
  return std::exp(log_det_spd(Matrix::Identity(n, n) - k.entries()));
}

SampleBatch sample(const DppTable& table, std::size_t count, std::uint64_t seed,
                   std::uint64_t stream, Exec exec) {
  if (count == 0) throw ConfigError("sample count must be at least 1");
  std::vector<double> cdf(table.size());
  double acc = 0.0;
  for (std::size_t m = 0; m < table.size(); ++m) {
    acc += table.probs()[m];
    cdf[m] = acc;
  }
  const double total = acc;
  const CounterRng rng(seed, stream);

  SampleBatch batch;
  batch.n = table.ground_size();
  batch.seed = seed;
  batch.stream = stream;
  batch.draws.resize(count);
  for_each_index(static_cast<std::int64_t>(count), exec, [&](std::int64_t i) {
    const double u = rng.uniform_at(static_cast<std::uint64_t>(i)) * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto m = std::min<std::ptrdiff_t>(it - cdf.begin(),
                                            static_cast<std::ptrdiff_t>(cdf.size()) - 1);
    batch.draws[static_cast<std::size_t>(i)] = static_cast<Bits>(m);
  });
  batch.counts.assign(table.size(), 0);
  for (Bits d : batch.draws) ++batch.counts[d];
  return batch;
}

EmpiricalTable empirical_table(const SampleBatch& batch) {
  if (batch.draws.empty()) throw EmptyBatch();
  EmpiricalTable t;
  t.n = batch.n;
  t.sample_count = batch.draws.size();
  t.freqs.resize(batch.counts.size());
  const auto total = static_cast<double>(t.sample_count);
  for (std::size_t m = 0; m < batch.counts.size(); ++m)
    t.freqs[m] = static_cast<double>(batch.counts[m]) / total;
  return t;
}

EmpiricalTable exact_frequencies(const DppTable& table) {
  return EmpiricalTable{table.ground_size(), table.probs(), 0};
}

nlohmann::json to_json(const SampleBatch& batch) {
  return {{"n", batch.n},
          {"seed", batch.seed},
          {"stream", batch.stream},
          {"count", batch.draws.size()},
          {"draws", batch.draws}};
}

SampleBatch sample_batch_from_json(const nlohmann::json& j) {
  try {
    SampleBatch b;
    b.n = j.at("n").get<int>();
    if (b.n < 1 || b.n > kMaxGroundSet) throw ConfigError("sample file: 'n' out of range");
    b.seed = j.at("seed").get<std::uint64_t>();
    b.stream = j.value("stream", std::uint64_t{0});
    b.draws = j.at("draws").get<std::vector<Bits>>();
    if (j.contains("count") && j.at("count").get<std::size_t>() != b.draws.size())
      throw ConfigError("sample file: 'count' does not match the number of draws");
    b.counts.assign(std::size_t{1} << b.n, 0);
    for (Bits d : b.draws) {
      if (d >= b.counts.size()) throw ConfigError("sample file: draw outside the ground set");
      ++b.counts[d];
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed sample file: ") + e.what());
  }
}

void write_probability_csv(std::ostream& out, const std::vector<double>& probs) {
  out << "mask,probability\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t m = 0; m < probs.size(); ++m) out << m << ',' << probs[m] << '\n';
}

EmpiricalTable read_probability_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("mask,probability", 0) != 0)
    throw ConfigError("probability CSV must start with 'mask,probability'");
  std::vector<double> probs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::size_t mask = 0;
    char comma = 0;
    double p = 0.0;
    if (!(fields >> mask >> comma >> p) || comma != ',' || mask != probs.size() || p < 0.0)
      throw ConfigError("probability CSV: bad row " + std::to_string(row));
    probs.push_back(p);
  }
  if (probs.size() < 2 || !std::has_single_bit(probs.size()))
    throw ConfigError("probability CSV: row count must be a power of two");
  return EmpiricalTable{std::countr_zero(probs.size()), std::move(probs), 0};
}

}  // namespace dppmle
