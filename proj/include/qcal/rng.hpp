#pragma once

#include <cstdint>

#include "qcal/prob.hpp"

namespace qcal {

// SplitMix64 output function; bijective on 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kRngGamma = 0x9e3779b97f4a7c15ULL;

// Stateless counter-indexed stream: value i is mix64(key + (i+1)*gamma),
// i.e. SplitMix64 seeded at `key`. Every value is a pure function of
// (key, counter), so consumers can draw in any order or in parallel and
// still reproduce bit-identical results.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + (counter + 1) * kRngGamma);
  }

  // Uniform on the open interval (0,1); never returns an endpoint.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  // Uniform on (lo,hi). Exact when lo == hi (returns lo).
  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + uniform(counter) * (hi - lo);
  }

  // Standard normal via the inverse CDF; one counter per variate.
  double normal(std::uint64_t counter) const {
    return std_normal_inv_cdf(uniform(counter));
  }

 private:
  std::uint64_t key_;
};

// Identifies one transform draw of one sample within one run. The derived
// key is what seeds every random decision for that draw, which makes whole
// runs replayable regardless of thread schedule.
struct SampleSeed {
  std::uint64_t run_seed = 0;
  std::uint64_t sample_index = 0;
  std::uint64_t draw_index = 0;

  std::uint64_t key() const {
    return mix64(mix64(mix64(run_seed + 1) + sample_index) + draw_index);
  }
};

}  // namespace qcal
