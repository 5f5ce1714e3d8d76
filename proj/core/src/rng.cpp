#include "ucts/rng.hpp"

#include "ucts/stats.hpp"

namespace ucts {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
  // Two finalizer rounds keep nearby (seed, stream) pairs decorrelated.
  key_ = mix64(mix64(seed + kGolden) ^ (stream * 0xD2B74407B1CE6E93ull + 0x8CB92BA72F3D8DD7ull));
}

std::uint64_t RngStream::next_u64() {
  std::uint64_t v = mix64(key_ + (++counter_) * kGolden);
  return v;
}

double RngStream::next_uniform() {
  // 53-bit mantissa, offset by half an ulp so 0 and 1 are unreachable.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::next_normal() { return stats::normal_quantile(next_uniform()); }

}  // namespace ucts
