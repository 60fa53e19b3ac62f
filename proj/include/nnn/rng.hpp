#pragma once

#include <cstdint>
#include <limits>
#include <utility>

namespace nnn {

/// Counter-based generator: the n-th draw of stream s under seed k is a pure
/// function of (k, s, n). Streams are split by key, so work partitioned across
/// threads draws the same numbers as a serial loop.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ULL))) {}

  /// Child generator for a sub-stream, e.g. one per geo.
  CounterRng split(std::uint64_t stream) const { return CounterRng(key_, stream); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Both Box-Muller outputs from one pair of uniforms.
  std::pair<double, double> normal_pair();

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace nnn
