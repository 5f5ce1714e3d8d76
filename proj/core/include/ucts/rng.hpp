#pragma once

#include <cstdint>

namespace ucts {

// Counter-based pseudo-random stream. Output i of stream (seed, stream) is
// a SplitMix64 finalizer applied to a per-stream key plus the counter, so
// replication substreams are independent and reproducible regardless of
// scheduling. Normal draws go through the inverse CDF, which keeps results
// bit-identical across platforms.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double next_uniform();

  // Standard normal via inverse-CDF transform of next_uniform().
  double next_normal();

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace ucts
