#include "amc/modulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc {

namespace {

constexpr double kPi = std::numbers::pi;

// Child streams of a frame seed.
constexpr std::uint64_t kBitStream = 1;

int LevelCount(ModulationScheme scheme) {
  switch (scheme) {
    case ModulationScheme::kOOK: return 2;
    case ModulationScheme::kASK4: return 4;
    case ModulationScheme::kASK8: return 8;
    case ModulationScheme::kPAM4: return 4;
    case ModulationScheme::kPAM16: return 16;
    default: return 0;
  }
}

unsigned GrayToBinary(unsigned gray) {
  unsigned value = gray;
  for (unsigned shift = gray >> 1; shift != 0; shift >>= 1) value ^= shift;
  return value;
}

unsigned ReadBits(std::span<const std::uint8_t> bits, std::size_t offset, int count) {
  unsigned value = 0;
  for (int b = 0; b < count; ++b) value = (value << 1) | (bits[offset + b] & 1u);
  return value;
}

// "Same"-length FIR with edge replication: constant input gives constant
// output, so no start-up transient appears inside the frame.
std::vector<Complex> FilterSame(const std::vector<Complex>& x, const std::vector<double>& taps) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto len = static_cast<std::ptrdiff_t>(taps.size());
  const std::ptrdiff_t center = (len - 1) / 2;
  std::vector<Complex> y(x.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    Complex acc{0.0, 0.0};
    for (std::ptrdiff_t k = 0; k < len; ++k) {
      const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k - center, 0, n - 1);
      acc += taps[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

std::vector<Complex> HoldUpsample(const std::vector<Complex>& symbols, int sps) {
  std::vector<Complex> out;
  out.reserve(symbols.size() * static_cast<std::size_t>(sps));
  for (const Complex& s : symbols) out.insert(out.end(), static_cast<std::size_t>(sps), s);
  return out;
}

IQSignal ModulateLinear(const FrameSpec& spec, const std::vector<Complex>& symbols) {
  const int sps = spec.samples_per_symbol;
  std::vector<Complex> baseband = HoldUpsample(symbols, sps);

  if (spec.scheme == ModulationScheme::kOQPSK) {
    // Delay the quadrature rail by half a symbol; the first value is held.
    const std::size_t offset = static_cast<std::size_t>(sps / 2);
    std::vector<double> q(baseband.size());
    for (std::size_t i = 0; i < baseband.size(); ++i) {
      q[i] = baseband[i >= offset ? i - offset : 0].imag();
    }
    for (std::size_t i = 0; i < baseband.size(); ++i) baseband[i].imag(q[i]);
  }

  const auto taps =
      RootRaisedCosineTaps(spec.pulse.filter_taps, sps, spec.pulse.rrc_rolloff);
  IQSignal signal{FilterSame(baseband, taps), spec.sample_rate_hz};
  NormalizePower(signal);
  return signal;
}

IQSignal ModulateContinuousPhase(const FrameSpec& spec, const std::vector<Complex>& data) {
  const int sps = spec.samples_per_symbol;
  std::vector<Complex> frequency = HoldUpsample(data, sps);

  double bt = 0.0;
  if (spec.scheme == ModulationScheme::kGFSK) bt = spec.pulse.gfsk_bt;
  if (spec.scheme == ModulationScheme::kGMSK) bt = spec.pulse.gmsk_bt;
  if (bt > 0.0) {
    frequency = FilterSame(frequency, GaussianTaps(bt, sps, spec.pulse.gaussian_span_symbols));
  }

  const double step = kPi * spec.pulse.cpm_index / static_cast<double>(sps);
  IQSignal signal;
  signal.sample_rate_hz = spec.sample_rate_hz;
  signal.samples.resize(frequency.size());
  double phase = 0.0;
  for (std::size_t i = 0; i < frequency.size(); ++i) {
    phase += step * frequency[i].real();
    signal.samples[i] = std::polar(1.0, phase);
  }
  NormalizePower(signal);
  return signal;
}

}  // namespace

std::string_view SchemeName(ModulationScheme scheme) {
  switch (scheme) {
    case ModulationScheme::kOOK: return "OOK";
    case ModulationScheme::kASK4: return "4ASK";
    case ModulationScheme::kASK8: return "8ASK";
    case ModulationScheme::kPAM4: return "4PAM";
    case ModulationScheme::kPAM16: return "16PAM";
    case ModulationScheme::kCPFSK: return "CPFSK";
    case ModulationScheme::kGFSK: return "GFSK";
    case ModulationScheme::kGMSK: return "GMSK";
    case ModulationScheme::kDQPSK: return "DQPSK";
    case ModulationScheme::kOQPSK: return "OQPSK";
  }
  return "?";
}

ModulationScheme ParseScheme(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (ModulationScheme s : kAllSchemes) {
    if (SchemeName(s) == upper) return s;
  }
  throw Error(ErrorCode::kInvalidScheme, "unknown modulation scheme '" + std::string(name) + "'");
}

ModulationScheme SchemeFromLabel(int label) {
  if (label < 0 || label >= kNumSchemes) {
    throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label) + " not in [0, 9]");
  }
  return static_cast<ModulationScheme>(label);
}

int BitsPerSymbol(ModulationScheme scheme) {
  switch (scheme) {
    case ModulationScheme::kOOK: return 1;
    case ModulationScheme::kASK4: return 2;
    case ModulationScheme::kASK8: return 3;
    case ModulationScheme::kPAM4: return 2;
    case ModulationScheme::kPAM16: return 4;
    case ModulationScheme::kCPFSK:
    case ModulationScheme::kGFSK:
    case ModulationScheme::kGMSK: return 1;
    case ModulationScheme::kDQPSK:
    case ModulationScheme::kOQPSK: return 2;
  }
  return 1;
}

bool IsContinuousPhase(ModulationScheme scheme) {
  return scheme == ModulationScheme::kCPFSK || scheme == ModulationScheme::kGFSK ||
         scheme == ModulationScheme::kGMSK;
}

double MeanPower(std::span<const Complex> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const Complex& s : samples) total += std::norm(s);
  return total / static_cast<double>(samples.size());
}

void NormalizePower(IQSignal& signal) {
  const double power = MeanPower(signal.samples);
  if (!(power > 0.0)) return;
  const double scale = 1.0 / std::sqrt(power);
  for (Complex& s : signal.samples) s *= scale;
}

void FrameSpec::Validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidSpec, what); };
  if (n_symbols <= 0) fail("n_symbols must be positive");
  if (samples_per_symbol <= 0) fail("samples_per_symbol must be positive");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) fail("sample_rate_hz must be positive");
  if (pulse.filter_taps <= 0) fail("pulse filter_taps must be positive");
  if (!(pulse.rrc_rolloff > 0.0 && pulse.rrc_rolloff <= 1.0)) fail("rrc_rolloff must be in (0, 1]");
  if (!(pulse.cpm_index > 0.0)) fail("cpm_index must be positive");
  if (!(pulse.gfsk_bt > 0.0) || !(pulse.gmsk_bt > 0.0)) fail("Gaussian BT must be positive");
  if (pulse.gaussian_span_symbols <= 0) fail("gaussian_span_symbols must be positive");
  if (scheme == ModulationScheme::kOQPSK && samples_per_symbol % 2 != 0) {
    fail("OQPSK requires an even samples_per_symbol");
  }
}

std::vector<std::uint8_t> GenerateBits(const FrameSpec& spec) {
  CounterRng rng = CounterRng(spec.rng_seed).Split(kBitStream);
  const std::size_t count =
      static_cast<std::size_t>(spec.n_symbols) * static_cast<std::size_t>(BitsPerSymbol(spec.scheme));
  std::vector<std::uint8_t> bits(count);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  return bits;
}

std::vector<Complex> MapSymbols(ModulationScheme scheme, std::span<const std::uint8_t> bits) {
  const int k = BitsPerSymbol(scheme);
  if (bits.size() % static_cast<std::size_t>(k) != 0) {
    throw Error(ErrorCode::kBitCountMismatch,
                std::to_string(bits.size()) + " bits is not a multiple of " + std::to_string(k) +
                    " for " + std::string(SchemeName(scheme)));
  }
  const std::size_t n = bits.size() / static_cast<std::size_t>(k);
  std::vector<Complex> symbols(n);

  switch (scheme) {
    case ModulationScheme::kOOK:
    case ModulationScheme::kASK4:
    case ModulationScheme::kASK8: {
      const double m = LevelCount(scheme);
      const double energy = (m - 1.0) * (2.0 * m - 1.0) / 6.0;  // E[i^2], i in 0..M-1
      const double scale = 1.0 / std::sqrt(energy);
      for (std::size_t i = 0; i < n; ++i) {
        const unsigned level = GrayToBinary(ReadBits(bits, i * k, k));
        symbols[i] = Complex(scale * level, 0.0);
      }
      break;
    }
    case ModulationScheme::kPAM4:
    case ModulationScheme::kPAM16: {
      const double m = LevelCount(scheme);
      const double scale = 1.0 / std::sqrt((m * m - 1.0) / 3.0);
      for (std::size_t i = 0; i < n; ++i) {
        const unsigned level = GrayToBinary(ReadBits(bits, i * k, k));
        symbols[i] = Complex(scale * (2.0 * level - (m - 1.0)), 0.0);
      }
      break;
    }
    case ModulationScheme::kCPFSK:
    case ModulationScheme::kGFSK:
    case ModulationScheme::kGMSK:
      for (std::size_t i = 0; i < n; ++i) symbols[i] = Complex(bits[i] ? 1.0 : -1.0, 0.0);
      break;
    case ModulationScheme::kDQPSK: {
      unsigned quadrant = 0;  // reference phase 0
      for (std::size_t i = 0; i < n; ++i) {
        quadrant = (quadrant + GrayToBinary(ReadBits(bits, i * k, k))) % 4;
        symbols[i] = std::polar(1.0, quadrant * (kPi / 2.0));
      }
      break;
    }
    case ModulationScheme::kOQPSK: {
      const double a = 1.0 / std::sqrt(2.0);
      for (std::size_t i = 0; i < n; ++i) {
        symbols[i] = Complex(bits[i * k] ? a : -a, bits[i * k + 1] ? a : -a);
      }
      break;
    }
  }
  return symbols;
}

IQSignal ModulateFrame(const FrameSpec& spec) {
  spec.Validate();
  const auto bits = GenerateBits(spec);
  const auto symbols = MapSymbols(spec.scheme, bits);
  return IsContinuousPhase(spec.scheme) ? ModulateContinuousPhase(spec, symbols)
                                        : ModulateLinear(spec, symbols);
}

std::vector<double> RootRaisedCosineTaps(int taps, int samples_per_symbol, double rolloff) {
  std::vector<double> h(static_cast<std::size_t>(taps));
  const double beta = rolloff;
  const double center = (taps - 1) / 2.0;
  for (int i = 0; i < taps; ++i) {
    const double t = (i - center) / samples_per_symbol;  // in symbol periods
    double value;
    if (std::abs(t) < 1e-12) {
      value = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-12) {
      value = beta / std::sqrt(2.0) *
              ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
               (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    } else {
      const double x = 4.0 * beta * t;
      value = (std::sin(kPi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta))) /
              (kPi * t * (1.0 - x * x));
    }
    h[static_cast<std::size_t>(i)] = value;
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> GaussianTaps(double bt, int samples_per_symbol, int span_symbols) {
  const int length = span_symbols * samples_per_symbol + 1;
  const double sigma = std::sqrt(std::log(2.0)) / (2.0 * kPi * bt);  // symbol periods
  const double center = (length - 1) / 2.0;
  std::vector<double> h(static_cast<std::size_t>(length));
  double sum = 0.0;
  for (int i = 0; i < length; ++i) {
    const double t = (i - center) / samples_per_symbol;
    h[static_cast<std::size_t>(i)] = std::exp(-t * t / (2.0 * sigma * sigma));
    sum += h[static_cast<std::size_t>(i)];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace amc
