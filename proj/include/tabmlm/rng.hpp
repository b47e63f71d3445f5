#pragma once

// Deterministic randomness for the whole pipeline. Everything that needs
// random numbers derives a named stream from one user seed, so results are
// bit-identical across runs, platforms, and compilers. Generator choice and
// derivation scheme are documented in README.md.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "tabmlm/common.hpp"

namespace tabmlm {

// SplitMix64: seed expander (Vigna). Also usable as a tiny generator.
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

// xoshiro256** 1.0 (Blackman & Vigna, public domain reference constants).
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, bound) without modulo bias (Lemire multiply-shift).
  std::uint64_t next_below(std::uint64_t bound) {
    for (;;) {
      std::uint64_t x = next();
      __uint128_t m = static_cast<__uint128_t>(x) * bound;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= bound || lo >= static_cast<std::uint64_t>(-bound) % bound)
        return static_cast<std::uint64_t>(m >> 64);
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
};

// Named substream: one master seed fans out into independent generators.
inline Xoshiro256ss derive_stream(std::uint64_t seed, std::string_view name) {
  return Xoshiro256ss(SplitMix64(seed ^ fnv1a64(name)).next());
}

// Standard normals via Box-Muller; caches the second variate.
class NormalSampler {
 public:
  explicit NormalSampler(Xoshiro256ss& gen) : gen_(gen) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1]: never feeds log() a zero.
    double u1 = 1.0 - gen_.next_double();
    double u2 = gen_.next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  Xoshiro256ss& gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// In-place Fisher-Yates.
template <class T>
void shuffle(std::vector<T>& v, Xoshiro256ss& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(gen.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace tabmlm
