#pragma once

#include <cstdint>
#include <limits>

namespace dppmle {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based generator: the value at position `counter` of stream
/// `stream` depends only on (seed, stream, counter). Streams are split by
/// hashing, so replicate r always sees the same numbers no matter how many
/// replicates run or in which order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t bits_at(std::uint64_t counter) const noexcept;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform_at(std::uint64_t counter) const noexcept;

  /// Derive an independent child stream.
  CounterRng split(std::uint64_t child) const noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  std::uint64_t key_;
};

/// Sequential adaptor satisfying UniformRandomBitGenerator, for use with
/// <random> distributions.
class StreamEngine {
 public:
  using result_type = std::uint64_t;

  explicit StreamEngine(CounterRng rng) noexcept : rng_(rng) {}
  StreamEngine(std::uint64_t seed, std::uint64_t stream) noexcept
      : rng_(seed, stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept { return rng_.bits_at(counter_++); }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace dppmle
