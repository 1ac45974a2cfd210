#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace entcert {

/// Deterministic random stream. Every randomized routine in the library
/// takes an explicit Rng, so results are reproducible from a single seed.
/// Concurrent workers use derive(), which creates an independent child
/// stream without advancing the parent. The uniform and Gaussian variates
/// are generated from raw mt19937_64 output (not std:: distributions) so a
/// fixed seed yields a bit-identical sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : seed_(seed), engine_(mix(seed, 0x7b1dcb5a93f2aa01ull)) {}

  /// Independent child stream for worker/chunk `stream`.
  Rng derive(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive, unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full range
    const std::uint64_t reject_below = (0 - span) % span;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r < reject_below);
    return lo + static_cast<std::int64_t>(r % span);
  }

  /// Standard normal via Marsaglia polar, one spare cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return splitmix(splitmix(a) ^ (0x9e3779b97f4a7c15ull + b));
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace entcert
