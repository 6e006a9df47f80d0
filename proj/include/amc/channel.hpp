#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "amc/modulation.hpp"

namespace amc {

/// Passing this as snr_db disables noise entirely.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct ChannelConfig {
  double snr_db = 10.0;
  std::vector<double> path_delays_s = {0.0, 0.0004, 0.0008};
  std::vector<double> path_gains_db = {0.0, -3.0, -6.0};
  std::uint64_t rng_seed = 0;

  /// Throws Error(kInvalidSpec) for malformed path lists.
  void Validate() const;
};

/// Integer sample offsets of each path; throws Error(kNonIntegerDelay) when
/// delay * rate is not integral within 1e-9.
std::vector<std::size_t> DelaysInSamples(const std::vector<double>& delays_s, double sample_rate_hz);

/// Linear amplitudes from dB gains, scaled so that the sum of squares is 1.
std::vector<double> NormalizedPathGains(const std::vector<double>& gains_db);

/// y[n] = sum_p g_p x[n - d_p], linear delays, truncated to the input length.
IQSignal ApplyMultipath(const IQSignal& signal, const ChannelConfig& config);

/// Adds circular complex Gaussian noise with variance P/10^(snr/10), where P
/// is the measured mean power of the input. snr_db = +inf returns the input.
IQSignal ApplyAwgn(const IQSignal& signal, double snr_db, std::uint64_t seed);

/// 10 log10(mean|clean|^2 / mean|noisy - clean|^2).
/// Throws Error(kLengthMismatch) or Error(kZeroNoise).
double MeasureSnr(const IQSignal& clean, const IQSignal& noisy);

/// Multipath followed by AWGN at config.snr_db, seeded from config.rng_seed.
IQSignal ApplyChannel(const IQSignal& signal, const ChannelConfig& config);

}  // namespace amc
