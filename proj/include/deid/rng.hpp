#pragma once

#include <cstdint>
#include <vector>

#include "deid/common.hpp"

namespace deid {

/// Deterministic 64-bit linear congruential generator.
///
/// state' = state * 6364136223846793005 + 1442695040888963407  (mod 2^64)
///
/// The constants are Knuth's MMIX multipliers. Draws are taken from the full
/// updated state; `uniform01` uses the top 53 bits, `below` maps a draw onto
/// [0, n) by 128-bit multiply-shift. Identical seeds produce identical
/// streams on every platform; this is the reproducibility contract behind
/// dataset splits, parameter initialization, shuffling, and dropout.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    return state_;
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace deid
