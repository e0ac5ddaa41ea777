#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace crane {

/// Reproducible random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Conversions to doubles and bounded integers are done here rather
/// than through <random> distributions, whose algorithms vary between
/// standard library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw (Box-Muller, one value per call).
  double normal();

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::size_t uniform_index(std::size_t n);

  /// Independent stream derived from this seed and a stream id.
  SeededRng derive(std::uint64_t stream) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

template <typename T>
void shuffle(std::span<T> values, SeededRng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

}  // namespace crane
