#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace amc {

using Complex = std::complex<double>;

/// The ten supported formats. The enumerator value is the class label used by
/// the dataset and the classifier.
enum class ModulationScheme : int {
  kOOK = 0,
  kASK4 = 1,
  kASK8 = 2,
  kPAM4 = 3,
  kPAM16 = 4,
  kCPFSK = 5,
  kGFSK = 6,
  kGMSK = 7,
  kDQPSK = 8,
  kOQPSK = 9,
};

inline constexpr int kNumSchemes = 10;

inline constexpr std::array<ModulationScheme, kNumSchemes> kAllSchemes = {
    ModulationScheme::kOOK,   ModulationScheme::kASK4,  ModulationScheme::kASK8,
    ModulationScheme::kPAM4,  ModulationScheme::kPAM16, ModulationScheme::kCPFSK,
    ModulationScheme::kGFSK,  ModulationScheme::kGMSK,  ModulationScheme::kDQPSK,
    ModulationScheme::kOQPSK,
};

std::string_view SchemeName(ModulationScheme scheme);
/// Case-insensitive; throws Error(kInvalidScheme).
ModulationScheme ParseScheme(std::string_view name);
inline int SchemeLabel(ModulationScheme scheme) { return static_cast<int>(scheme); }
/// Throws Error(kLabelOutOfRange) outside [0, 9].
ModulationScheme SchemeFromLabel(int label);

int BitsPerSymbol(ModulationScheme scheme);
bool IsContinuousPhase(ModulationScheme scheme);

struct IQSignal {
  std::vector<Complex> samples;
  double sample_rate_hz = 200e3;
};

double MeanPower(std::span<const Complex> samples);

/// Scales to unit mean power. An all-zero signal is left untouched.
void NormalizePower(IQSignal& signal);

/// Pulse and phase-shaping parameters shared by all frames.
struct PulseOptions {
  int filter_taps = 8;           // transmit FIR length for linear schemes
  double rrc_rolloff = 0.35;
  double cpm_index = 0.5;        // modulation index h
  double gfsk_bt = 0.5;
  double gmsk_bt = 0.3;
  int gaussian_span_symbols = 4;
};

struct FrameSpec {
  ModulationScheme scheme = ModulationScheme::kOOK;
  int n_symbols = 1024;
  int samples_per_symbol = 8;
  std::uint64_t rng_seed = 0;
  double sample_rate_hz = 200e3;
  PulseOptions pulse;

  /// Throws Error(kInvalidSpec).
  void Validate() const;
};

/// n_symbols * BitsPerSymbol(scheme) uniform bits, a pure function of rng_seed.
std::vector<std::uint8_t> GenerateBits(const FrameSpec& spec);

/// Maps bits (MSB first within a symbol) to unit-average-power symbols.
///
/// OOK/ASK use unipolar levels 0..M-1, PAM uses bipolar odd levels, both Gray
/// coded. DQPSK returns exp(j*phase) after accumulating Gray-coded k*pi/2
/// increments from phase 0. OQPSK returns Gray QPSK points; the half-symbol
/// offset is applied by ModulateFrame. CPFSK/GFSK/GMSK return the +/-1 data
/// values on the real axis. Throws Error(kBitCountMismatch).
std::vector<Complex> MapSymbols(ModulationScheme scheme, std::span<const std::uint8_t> bits);

/// Complete baseband frame: bits, symbol mapping, upsampling and pulse
/// shaping (or continuous-phase integration), then power normalization.
/// The result has exactly n_symbols * samples_per_symbol samples.
IQSignal ModulateFrame(const FrameSpec& spec);

/// Truncated root-raised-cosine, centered, normalized to unit DC gain.
std::vector<double> RootRaisedCosineTaps(int taps, int samples_per_symbol, double rolloff);

/// Gaussian frequency-shaping filter with bandwidth-time product bt, spanning
/// span_symbols symbols (odd length span*sps + 1), normalized to unit sum.
std::vector<double> GaussianTaps(double bt, int samples_per_symbol, int span_symbols);

}  // namespace amc
