#include "amc/rng.hpp"

#include <cmath>
#include <numbers>

namespace amc {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

std::uint64_t Mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t HashCombine(std::uint64_t seed, std::uint64_t value) noexcept {
  return Mix64(seed ^ (Mix64(value + kGamma) + kSplitSalt + (seed << 6) + (seed >> 2)));
}

CounterRng::result_type CounterRng::At(std::uint64_t counter) const noexcept {
  return Mix64(key_ + (counter + 1) * kGamma);
}

CounterRng CounterRng::Split(std::uint64_t index) const noexcept {
  return CounterRng(HashCombine(key_ ^ kSplitSalt, index), RawKey{});
}

double CounterRng::Uniform() noexcept {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

std::uint64_t CounterRng::Below(std::uint64_t bound) noexcept {
  // 2^64 - threshold is a multiple of bound, so the modulo is unbiased.
  const std::uint64_t threshold = (0 - bound) % bound;
  std::uint64_t r;
  do {
    r = (*this)();
  } while (r < threshold);
  return r % bound;
}

double CounterRng::Normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

}  // namespace amc
