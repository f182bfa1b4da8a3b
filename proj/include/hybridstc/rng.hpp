#pragma once

#include <cstdint>

namespace hybridstc {

/// Counter-based generator: output k of stream s under seed is
///   splitmix64(key + (k + 1) * 0x9e3779b97f4a7c15),
///   key = splitmix64(seed) ^ splitmix64(s * 0xd1b54a32d192ed03 + 1).
/// Any (seed, stream, k) maps to the same value on every platform and
/// regardless of how streams are distributed over threads.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed) ^ mix(stream * 0xd1b54a32d192ed03ULL + 1)) {}

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    ++counter_;
    return mix(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace hybridstc
