#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace rfp {

/// Counter-based deterministic RNG. Streams are derived by mixing a base
/// seed with up to three stream coordinates, so (seed, device, day, frame)
/// always yields the same sequence regardless of evaluation order or
/// platform. Gaussian draws use Box-Muller on top of the uniform stream;
/// nothing here depends on implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t s = seed;
    s = mix(s ^ (0x9e3779b97f4a7c15ull + a));
    s = mix(s ^ (0xbf58476d1ce4e5b9ull + b));
    s = mix(s ^ (0x94d049bb133111ebull + c));
    return Rng(raw_tag{}, s);
  }

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // rejection-free threshold method would need 128-bit; plain modulo bias
    // is acceptable only for tiny n, so use rejection on the top range.
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double m = std::sqrt(-2.0 * std::log(u1));
    spare_ = m * std::sin(6.283185307179586476925286766559 * u2);
    has_spare_ = true;
    return m * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates, deterministic for a given stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  struct raw_tag {};
  Rng(raw_tag, std::uint64_t s) : state_(s) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdull;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
    return z ^ (z >> 33);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rfp
