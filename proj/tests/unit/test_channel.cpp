#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"

#include "amc/channel.hpp"
#include "amc/rng.hpp"

using namespace amc;

namespace {

IQSignal RandomSignal(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed);
  IQSignal s;
  s.samples.resize(n);
  for (auto& x : s.samples) x = Complex(rng.Normal(), rng.Normal());
  NormalizePower(s);
  return s;
}

ChannelConfig SinglePath() {
  ChannelConfig c;
  c.path_delays_s = {0.0};
  c.path_gains_db = {0.0};
  return c;
}

}  // namespace

TEST_CASE("single zero-delay path is the identity") {
  const IQSignal x = RandomSignal(1000, 1);
  CHECK(ApplyMultipath(x, SinglePath()).samples == x.samples);
}

TEST_CASE("delays convert to integer sample offsets") {
  const auto d = DelaysInSamples({0.0, 0.0004, 0.0008}, 200e3);
  CHECK(d == std::vector<std::size_t>{0, 80, 160});
  CHECK_AMC_ERROR(DelaysInSamples({0.0, 0.00001234}, 200e3), ErrorCode::kNonIntegerDelay);

  IQSignal x = RandomSignal(100, 2);
  ChannelConfig c;
  c.path_delays_s = {0.0, 0.0000123};
  c.path_gains_db = {0.0, -3.0};
  CHECK_AMC_ERROR(ApplyMultipath(x, c), ErrorCode::kNonIntegerDelay);
}

TEST_CASE("path gains are normalized to unit energy") {
  const auto g = NormalizedPathGains({0.0, -3.0, -6.0});
  double e = 0.0;
  for (double v : g) e += v * v;
  CHECK(e == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g[1] / g[0] == doctest::Approx(std::pow(10.0, -3.0 / 20.0)));
}

TEST_CASE("impulse through the default channel yields the tap gains") {
  IQSignal x;
  x.samples.assign(400, Complex{0.0, 0.0});
  x.samples[0] = 1.0;
  const ChannelConfig c;
  const IQSignal y = ApplyMultipath(x, c);
  const auto g = NormalizedPathGains(c.path_gains_db);
  for (std::size_t n = 0; n < y.samples.size(); ++n) {
    Complex expected{0.0, 0.0};
    if (n == 0) expected = g[0];
    if (n == 80) expected = g[1];
    if (n == 160) expected = g[2];
    CHECK(y.samples[n] == expected);
  }
}

TEST_CASE("multipath equals a direct FIR convolution oracle") {
  const IQSignal x = RandomSignal(1024, 3);
  ChannelConfig c;
  c.path_delays_s = {0.0, 0.00002, 0.0004, 0.0008};
  c.path_gains_db = {0.0, -1.5, -3.0, -6.0};
  const IQSignal y = ApplyMultipath(x, c);
  // Expand the paths into a dense impulse response, then convolve.
  const auto delays = DelaysInSamples(c.path_delays_s, x.sample_rate_hz);
  const auto gains = NormalizedPathGains(c.path_gains_db);
  std::vector<double> h(delays.back() + 1, 0.0);
  std::vector<bool> tap(h.size(), false);
  for (std::size_t p = 0; p < delays.size(); ++p) {
    h[delays[p]] = gains[p];
    tap[delays[p]] = true;
  }
  REQUIRE(y.samples.size() == x.samples.size());
  for (std::size_t n = 0; n < x.samples.size(); ++n) {
    Complex acc{0.0, 0.0};
    for (std::size_t k = 0; k < h.size() && k <= n; ++k) {
      if (tap[k]) acc += h[k] * x.samples[n - k];
    }
    CHECK(y.samples[n] == acc);
  }
}

TEST_CASE("multipath preserves power of long unit-power input within 5%") {
  const IQSignal x = RandomSignal(100000, 4);
  CHECK(std::abs(MeanPower(ApplyMultipath(x, ChannelConfig{}).samples) - 1.0) < 0.05);
}

TEST_CASE("awgn examples") {
  const IQSignal x = RandomSignal(100000, 5);
  CHECK(ApplyAwgn(x, kNoNoise, 1).samples == x.samples);

  const IQSignal y0 = ApplyAwgn(x, 0.0, 7);
  double noise = 0.0;
  for (std::size_t i = 0; i < x.samples.size(); ++i) noise += std::norm(y0.samples[i] - x.samples[i]);
  CHECK(noise / x.samples.size() == doctest::Approx(1.0).epsilon(0.02));

  CHECK(std::abs(MeasureSnr(x, ApplyAwgn(x, 6.0, 8)) - 6.0) < 0.2);
  CHECK(ApplyAwgn(x, 3.0, 9).samples == ApplyAwgn(x, 3.0, 9).samples);
  CHECK(ApplyAwgn(x, 3.0, 9).samples != ApplyAwgn(x, 3.0, 10).samples);
}

TEST_CASE("awgn calibration over seeds and SNRs") {
  const IQSignal x = RandomSignal(100000, 6);
  for (double snr : {0.0, 5.0, 10.0}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CHECK(std::abs(MeasureSnr(x, ApplyAwgn(x, snr, seed)) - snr) < 0.2);
    }
  }
}

TEST_CASE("measure_snr examples and errors") {
  IQSignal clean;
  clean.samples = {Complex(1, 0), Complex(-1, 0), Complex(0, 1), Complex(0, -1)};
  CHECK_AMC_ERROR(MeasureSnr(clean, clean), ErrorCode::kZeroNoise);

  IQSignal shorter = clean;
  shorter.samples.pop_back();
  CHECK_AMC_ERROR(MeasureSnr(clean, shorter), ErrorCode::kLengthMismatch);

  IQSignal equal = clean;
  for (auto& s : equal.samples) s += Complex(0.0, 1.0);  // noise power 1
  CHECK(MeasureSnr(clean, equal) == doctest::Approx(0.0));

  IQSignal quarter = clean;
  for (auto& s : quarter.samples) s += Complex(0.5, 0.0);  // noise power 0.25
  CHECK(MeasureSnr(clean, quarter) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));
  CHECK(MeasureSnr(clean, quarter) == doctest::Approx(6.0206).epsilon(1e-5));
}

TEST_CASE("channel config validation") {
  ChannelConfig c;
  c.path_gains_db = {0.0};
  CHECK_AMC_ERROR(c.Validate(), ErrorCode::kInvalidSpec);
  c = ChannelConfig{};
  c.path_delays_s = {0.0004, 0.0, 0.0008};
  CHECK_AMC_ERROR(c.Validate(), ErrorCode::kInvalidSpec);
  c = ChannelConfig{};
  c.path_delays_s = {0.0001, 0.0004, 0.0008};
  CHECK_AMC_ERROR(c.Validate(), ErrorCode::kInvalidSpec);
}

TEST_CASE("apply_channel is deterministic") {
  const IQSignal x = RandomSignal(5000, 12);
  ChannelConfig c;
  c.snr_db = 4.0;
  c.rng_seed = 99;
  CHECK(ApplyChannel(x, c).samples == ApplyChannel(x, c).samples);
}
