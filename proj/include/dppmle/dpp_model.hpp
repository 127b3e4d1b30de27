#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "dppmle/kernel_algebra.hpp"
#include "dppmle/subset_kernels.hpp"

namespace dppmle {

struct TableOptions {
  /// Tables hold 2^n doubles; larger ground sets raise GroundSetTooLarge.
  int max_ground_set = 20;
  Exec exec = Exec::parallel;
};

/// Exact distribution p_J = det(L_J) / det(I + L) of an L-ensemble, indexed
/// by subset bits.
class DppTable {
 public:
  DppTable(KernelMatrix kernel, std::vector<double> log_dets,
           std::vector<double> probs, double log_normalizer,
           double identity_residual);

  int ground_size() const noexcept { return kernel_.size(); }
  std::size_t size() const noexcept { return probs_.size(); }
  const KernelMatrix& kernel() const noexcept { return kernel_; }
  const std::vector<double>& probs() const noexcept { return probs_; }
  double prob(Bits j) const { return probs_[j]; }
  /// log det(L_J) per subset.
  const std::vector<double>& log_dets() const noexcept { return log_dets_; }
  /// det(I + L).
  double normalizer() const;
  double log_normalizer() const noexcept { return log_normalizer_; }
  /// |Σ_J det(L_J) / det(I + L) - 1|.
  double identity_residual() const noexcept { return identity_residual_; }

 private:
  KernelMatrix kernel_;
  std::vector<double> log_dets_;
  std::vector<double> probs_;
  double log_normalizer_;
  double identity_residual_;
};

/// Builds the full table from per-subset log-determinants, normalizing with a
/// log-sum-exp. Throws NormalizationMismatch if Σ_J det(L_J) and det(I + L)
/// differ by more than 1e-6 relative.
DppTable build_table(const KernelMatrix& l, const TableOptions& options = {});

double subset_probability(const KernelMatrix& l, SubsetMask j);

/// P[S ⊆ Z] = det(K_S).
double inclusion_probability(const KernelMatrix& l, SubsetMask s);
/// P[S ⊆ Z] = Σ_{J ⊇ S} p_J, summed over the table.
double inclusion_probability(const DppTable& table, SubsetMask s);

/// P[Z = ∅] = det(I - K).
double empty_probability(const KernelMatrix& l);

struct SampleBatch {
  int n = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<Bits> draws;
  std::vector<std::uint64_t> counts;  // 2^n entries

  std::size_t count() const noexcept { return draws.size(); }
};

/// i.i.d. draws by inverse CDF over the table. The i-th draw uses counter i
/// of the (seed, stream) generator, so results do not depend on threading.
SampleBatch sample(const DppTable& table, std::size_t count, std::uint64_t seed,
                   std::uint64_t stream = 0, Exec exec = Exec::parallel);

/// Subset frequencies. sample_count == 0 marks exact population weights
/// (e.g. read from a probability table) rather than counts.
struct EmpiricalTable {
  int n = 0;
  std::vector<double> freqs;
  std::uint64_t sample_count = 0;
};

EmpiricalTable empirical_table(const SampleBatch& batch);
EmpiricalTable exact_frequencies(const DppTable& table);

// Serialization.

nlohmann::json to_json(const SampleBatch& batch);
SampleBatch sample_batch_from_json(const nlohmann::json& j);

/// "mask,probability" rows, one per subset, 17 significant digits.
void write_probability_csv(std::ostream& out, const std::vector<double>& probs);
/// Reads a probability CSV as population weights; n is inferred from the row
/// count, which must be a power of two.
EmpiricalTable read_probability_csv(std::istream& in);

}  // namespace dppmle
