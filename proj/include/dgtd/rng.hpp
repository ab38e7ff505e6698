#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "dgtd/types.hpp"

namespace dgtd {

// Counter-based generator (SplitMix64). Streams are a pure function of the
// key, so deriving one generator per (master seed, seed index) pair gives
// seed sets whose draws do not depend on execution order.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t key) : state_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_key(std::uint64_t master, std::uint64_t index) {
  SplitMix64 g(master);
  std::uint64_t a = g();
  std::uint64_t b = g();
  return a ^ (b + 0x9e3779b97f4a7c15ull * (index + 1));
}

inline SplitMix64 rng_for_seed(std::uint64_t master, std::uint64_t index) {
  return SplitMix64(mix_key(master, index));
}

// Uniform on [0, 1).
inline Real uniform_real(SplitMix64& g) {
  return static_cast<Real>(g() >> 11) * 0x1.0p-53;
}

inline Real uniform_real(SplitMix64& g, Real lo, Real hi) {
  return lo + (hi - lo) * uniform_real(g);
}

// Uniform on {0, ..., n-1} without modulo bias.
inline int uniform_int(SplitMix64& g, int n) {
  using u128 = unsigned __int128;
  std::uint64_t x = g();
  return static_cast<int>((u128(x) * u128(n)) >> 64);
}

inline Real normal_real(SplitMix64& g) {
  Real u1 = uniform_real(g);
  Real u2 = uniform_real(g);
  if (u1 <= 0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Index sampled according to a probability row (entries sum to 1).
inline int sample_index(SplitMix64& g, const VectorRef& probs) {
  Real u = uniform_real(g);
  Real acc = 0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace dgtd
