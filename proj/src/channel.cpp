#include "amc/channel.hpp"

#include <cmath>
#include <string>

#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc {

void ChannelConfig::Validate() const {
  if (path_delays_s.empty()) throw Error(ErrorCode::kInvalidSpec, "at least one path is required");
  if (path_delays_s.size() != path_gains_db.size()) {
    throw Error(ErrorCode::kInvalidSpec, "path_delays_s and path_gains_db differ in length");
  }
  if (path_delays_s.front() != 0.0) throw Error(ErrorCode::kInvalidSpec, "first path delay must be 0");
  for (std::size_t i = 0; i < path_delays_s.size(); ++i) {
    if (!std::isfinite(path_delays_s[i]) || path_delays_s[i] < 0.0) {
      throw Error(ErrorCode::kInvalidSpec, "path delays must be finite and non-negative");
    }
    if (i > 0 && path_delays_s[i] < path_delays_s[i - 1]) {
      throw Error(ErrorCode::kInvalidSpec, "path delays must be sorted ascending");
    }
    if (!std::isfinite(path_gains_db[i])) throw Error(ErrorCode::kInvalidSpec, "path gains must be finite");
  }
}

std::vector<std::size_t> DelaysInSamples(const std::vector<double>& delays_s, double sample_rate_hz) {
  std::vector<std::size_t> out;
  out.reserve(delays_s.size());
  for (double d : delays_s) {
    const double samples = d * sample_rate_hz;
    const double rounded = std::round(samples);
    if (std::abs(samples - rounded) > 1e-9 || rounded < 0.0) {
      throw Error(ErrorCode::kNonIntegerDelay,
                  "delay " + std::to_string(d) + " s is " + std::to_string(samples) +
                      " samples at " + std::to_string(sample_rate_hz) + " Hz");
    }
    out.push_back(static_cast<std::size_t>(rounded));
  }
  return out;
}

std::vector<double> NormalizedPathGains(const std::vector<double>& gains_db) {
  std::vector<double> gains;
  gains.reserve(gains_db.size());
  double energy = 0.0;
  for (double g : gains_db) {
    gains.push_back(std::pow(10.0, g / 20.0));
    energy += gains.back() * gains.back();
  }
  const double scale = 1.0 / std::sqrt(energy);
  for (double& g : gains) g *= scale;
  return gains;
}

IQSignal ApplyMultipath(const IQSignal& signal, const ChannelConfig& config) {
  config.Validate();
  const auto delays = DelaysInSamples(config.path_delays_s, signal.sample_rate_hz);
  const auto gains = NormalizedPathGains(config.path_gains_db);

  IQSignal out;
  out.sample_rate_hz = signal.sample_rate_hz;
  out.samples.assign(signal.samples.size(), Complex{0.0, 0.0});
  for (std::size_t n = 0; n < signal.samples.size(); ++n) {
    Complex acc{0.0, 0.0};
    for (std::size_t p = 0; p < delays.size(); ++p) {
      if (n >= delays[p]) acc += gains[p] * signal.samples[n - delays[p]];
    }
    out.samples[n] = acc;
  }
  return out;
}

IQSignal ApplyAwgn(const IQSignal& signal, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0.0) return signal;
  const double power = MeanPower(signal.samples);
  const double variance = power / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(variance / 2.0);  // per rail

  CounterRng rng(seed);
  IQSignal out = signal;
  for (Complex& s : out.samples) {
    const double re = rng.Normal();
    const double im = rng.Normal();
    s += Complex(sigma * re, sigma * im);
  }
  return out;
}

double MeasureSnr(const IQSignal& clean, const IQSignal& noisy) {
  if (clean.samples.size() != noisy.samples.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(clean.samples.size()) + " vs " +
                                                std::to_string(noisy.samples.size()) + " samples");
  }
  double signal = 0.0;
  double noise = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    signal += std::norm(clean.samples[i]);
    noise += std::norm(noisy.samples[i] - clean.samples[i]);
  }
  if (noise == 0.0) throw Error(ErrorCode::kZeroNoise, "signals are identical");
  return 10.0 * std::log10(signal / noise);
}

IQSignal ApplyChannel(const IQSignal& signal, const ChannelConfig& config) {
  return ApplyAwgn(ApplyMultipath(signal, config), config.snr_db, config.rng_seed);
}

}  // namespace amc
