#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>
#include <vector>

namespace pamkit {

// Deterministic random machinery. Everything here is pinned to a published
// algorithm so that a run can be reproduced bit-for-bit from its seed on any
// platform or language: xoshiro256++ for the stream, splitmix64 for state
// expansion, FNV-1a + splitmix64 finalizer for seed derivation. std::mt19937
// and the std distributions are deliberately not used; their output is not
// portable across standard library implementations.

/// splitmix64 state-advance + finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// splitmix64 finalizer applied to a single value (no state carried).
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a 64-bit hash of a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Order-sensitive combiner for deriving child seeds from a base seed and a
/// list of context fields. Derivation rule, applied left to right:
///   h <- mix64(h ^ (field + 0x9e3779b97f4a7c15))
/// where string fields contribute fnv1a64(bytes) and integers their 64-bit
/// value. Every experiment cell seed in the harness comes from this chain.
class SeedChain {
 public:
  explicit SeedChain(std::uint64_t base) : h_(mix64(base ^ 0x243f6a8885a308d3ULL)) {}

  SeedChain& absorb(std::uint64_t v) {
    h_ = mix64(h_ ^ (v + 0x9e3779b97f4a7c15ULL));
    return *this;
  }
  SeedChain& absorb(std::string_view s) { return absorb(fnv1a64(s)); }
  SeedChain& absorb(int v) { return absorb(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }

  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_;
};

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name) {
  return SeedChain(base).absorb(name).value();
}
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name, int a, int b) {
  return SeedChain(base).absorb(name).absorb(a).absorb(b).value();
}

/// xoshiro256++ (Blackman & Vigna 2019), seeded by expanding a 64-bit seed
/// with splitmix64. Passes BigCrush; tiny state; trivially portable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Unbiased uniform integer in [0, n). Rejection sampling on the top range.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  /// Standard normal via Box-Muller; one value per call, pair cached.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// In-place Fisher-Yates shuffle, iterating i from n-1 down to 1 and
  /// swapping with next_below(i+1).
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace pamkit
