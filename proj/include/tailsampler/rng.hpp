#pragma once

// Seeded, portable random number generation.
//
// The generator is SplitMix64 (Steele, Lea & Vigna, "Fast splittable
// pseudorandom number generators", OOPSLA 2014): a 64-bit Weyl sequence fed
// through a finalizing mixer. The same mixer doubles as a stateless hash,
// which is how keyed sub-streams (per epoch, per image, per push) are derived
// without sharing state. All draws are defined in terms of raw 64-bit outputs
// only, so a run is reproducible for a fixed seed regardless of platform or
// standard library.

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace tailsampler {

// Finalizing mixer from SplitMix64. Bijective on 64-bit values.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Folds an ordered list of parts into a single 64-bit key. Used to derive
// independent sub-streams: derive_key(seed, {epoch, image_id}).
constexpr std::uint64_t derive_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = mix64(seed + 0x9e3779b97f4a7c15ull);
  for (std::uint64_t p : parts) {
    h = mix64(h ^ (p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
  }
  return h;
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    return mix64(z);
  }

  // Uniform double in [0, 1), 53 usable bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Unbiased via rejection before modulo.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Standard normal via Box-Muller. One draw per call; the sine half of the
  // pair is discarded to keep the stream position a pure function of the
  // call count.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  std::uint64_t state_;
};

// Deterministic Fisher-Yates shuffle driven by the supplied generator.
template <typename Vec>
void shuffle(Vec& v, SplitMix64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen.next_below(i));
    auto tmp = v[i - 1];
    v[i - 1] = v[j];
    v[j] = tmp;
  }
}

}  // namespace tailsampler
