#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (key, counter), so streams are reproducible across platforms and thread
// schedules. Sub-streams are derived by hashing the parent key with a tag:
//
//   derive_key(seed, {replication, study, purpose})
//
// The mixing function is the SplitMix64 finalizer applied to
// key + counter * golden-gamma.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>

namespace dsilt {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

inline constexpr std::uint64_t derive_key(std::uint64_t parent,
                                          std::initializer_list<std::uint64_t> tags) {
  std::uint64_t k = splitmix64_mix(parent ^ 0x5851f42d4c957f2dULL);
  for (auto t : tags) k = splitmix64_mix(k + kGoldenGamma * (t + 1));
  return k;
}

// Stream purposes used with derive_key.
enum class StreamTag : std::uint64_t {
  kDesign = 1,
  kCoefficients = 2,
  kOutcomes = 3,
  kPartition = 4,
  kCrossValidation = 5,
};

class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64_mix(key_ + kGoldenGamma * ++counter_); }

  // Uniform on (0, 1), never exactly 0 or 1.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  // Box-Muller; the spare deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double prob) { return uniform() < prob; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dsilt
