#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>

namespace amc {

/// Stateless 64-bit mixing function (the SplitMix64 finalizer).
std::uint64_t Mix64(std::uint64_t x) noexcept;

/// Combines a running hash with one more 64-bit word.
std::uint64_t HashCombine(std::uint64_t seed, std::uint64_t value) noexcept;

/// Counter-based generator: the n-th output is Mix64(key + (n + 1) * gamma).
///
/// Any output can be computed without visiting the ones before it, and
/// independent child streams are derived with Split(index), which hashes the
/// parent key together with the index. The library uses one child stream per
/// frame (and per purpose inside a frame), so generation order never affects
/// the numbers a given frame sees.
///
/// Satisfies UniformRandomBitGenerator, but distributions from <random> are
/// implementation-defined; use the members below where bit-reproducibility
/// across standard libraries matters.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) noexcept : key_(Mix64(seed)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return At(counter_++); }

  /// Output at an absolute counter position; does not advance the stream.
  result_type At(std::uint64_t counter) const noexcept;

  /// Independent child stream. Split(i) never depends on how far this stream
  /// has advanced.
  CounterRng Split(std::uint64_t index) const noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double Uniform() noexcept;

  /// Uniform integer in [0, bound); bound must be positive. Unbiased.
  std::uint64_t Below(std::uint64_t bound) noexcept;

  /// Standard normal deviate (Box-Muller; both outputs of a pair are used).
  double Normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  struct RawKey {};
  CounterRng(std::uint64_t key, RawKey) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Deterministic in-place Fisher-Yates shuffle driven by CounterRng.
template <typename It>
void Shuffle(It first, It last, CounterRng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = rng.Below(i);
    using std::swap;
    swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
  }
}

}  // namespace amc
