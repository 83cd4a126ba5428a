#pragma once

#include <cstdint>
#include <random>
#include <utility>

namespace szad {

/// SplitMix64 finalizer; maps (seed, stream) to an independent sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with portable uniform/normal draws. The distributions are
/// computed here rather than through <random> adaptors so that outputs do not
/// depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      using std::swap;
      swap(first[i - 1], first[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace szad
