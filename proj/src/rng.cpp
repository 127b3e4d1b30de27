#include "dppmle/rng.hpp"

namespace dppmle {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(mix64(mix64(seed) ^ mix64(stream ^ 0x5851f42d4c957f2dULL))) {}

std::uint64_t CounterRng::bits_at(std::uint64_t counter) const noexcept {
  return mix64(key_ ^ mix64(counter * kGolden + 0x2545f4914f6cdd1dULL));
}

double CounterRng::uniform_at(std::uint64_t counter) const noexcept {
  return static_cast<double>(bits_at(counter) >> 11) * 0x1.0p-53;
}

CounterRng CounterRng::split(std::uint64_t child) const noexcept {
  return CounterRng(mix64(key_ + mix64(child ^ 0xd1b54a32d192ed03ULL)));
}

}  // namespace dppmle
