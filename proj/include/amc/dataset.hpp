#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amc/channel.hpp"
#include "amc/imaging.hpp"
#include "amc/modulation.hpp"

namespace amc {

struct ImagingSpec {
  ImagePlaneSpec plane;
  ThreeChannelParams channels;
};

/// Everything needed to regenerate a labelled image set bit-for-bit.
struct DatasetSpec {
  std::vector<ModulationScheme> schemes{kAllSchemes.begin(), kAllSchemes.end()};
  std::vector<double> snr_grid_db = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int per_class_per_snr = 100;
  FrameSpec frame;        // scheme and seed are overwritten per entry
  ChannelConfig channel;  // snr and seed are overwritten per entry
  ImagingSpec imaging;
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "data";
  int jobs = 0;  // worker threads; 0 = hardware concurrency

  void Validate() const;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int label = 0;
  std::string scheme;
  double snr_db = 0.0;
  std::uint64_t frame_seed = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

inline constexpr std::string_view kManifestFileName = "manifest.ndjson";

/// SNR in hundredths of a dB, the key used for seeding and SNR matching.
std::int64_t SnrMillibels(double snr_db);

/// Shortest decimal text that round-trips ("0.5", "10", "-3").
std::string FormatSnr(double snr_db);

/// Child seed for one image: a 64-bit hash over
/// (master_seed, scheme label, SNR in millibels, index), combined in that order.
std::uint64_t DeriveFrameSeed(std::uint64_t master_seed, ModulationScheme scheme, double snr_db,
                              std::uint64_t index);

/// Relative image path "<scheme>/<snr_db>/<index>.png".
std::string EntryPath(ModulationScheme scheme, double snr_db, std::uint64_t index);

struct SynthesizedFrame {
  IQSignal clean;     // modulated, before the channel
  IQSignal received;  // after multipath and noise
  RgbImage image;     // three-channel encoding at plane resolution
  std::size_t dropped = 0;
};

/// The per-image pipeline: modulate, multipath, AWGN, three-channel image.
SynthesizedFrame SynthesizeFrame(const DatasetSpec& spec, ModulationScheme scheme, double snr_db,
                                 std::uint64_t frame_seed);

struct GenerationSummary {
  Manifest manifest;
  std::map<std::pair<int, std::int64_t>, std::size_t> counts;  // (label, millibels) -> images
  std::size_t dropped_samples = 0;
  std::filesystem::path manifest_path;
};

/// Writes every image and the manifest beneath spec.output_dir. Re-running
/// with the same spec rewrites identical bytes. Throws Error(kIoError) or
/// Error(kInvalidSpec).
GenerationSummary GenerateDataset(const DatasetSpec& spec);

/// One JSON object per line with fields path, label, scheme, snr_db, frame_seed.
void WriteManifest(const Manifest& entries, const std::filesystem::path& path);

/// Throws Error(kMalformedRecord) naming the 1-based line, or Error(kIoError).
/// With verify_files, every path must exist relative to the manifest directory.
Manifest LoadManifest(const std::filesystem::path& path, bool verify_files = false);

enum class SplitRole { kBaseTrain, kValidation, kTestIn, kTestOut, kFinetuneTrain };

std::string_view SplitRoleName(SplitRole role);
SplitRole ParseSplitRole(std::string_view name);

struct SplitSpec {
  SplitRole role = SplitRole::kBaseTrain;
  std::vector<double> snrs_db;
  int per_class = 100;
};

/// Exactly per_class entries for every (label present in the manifest, SNR
/// in the split), drawn by a seeded shuffle that depends only on
/// (seed, role, label, SNR). Entries whose path is in `exclude` are never
/// drawn. Throws Error(kInsufficientSamples) naming the deficient cell.
Manifest MakeSplit(const Manifest& manifest, const SplitSpec& split, std::uint64_t seed,
                   const std::set<std::string>& exclude = {});

/// Draws the splits in order, each excluding everything drawn before it.
std::vector<Manifest> DrawDisjointSplits(const Manifest& manifest, const std::vector<SplitSpec>& splits,
                                         std::uint64_t seed);

/// 64-bit FNV-1a of a file's bytes, printed as hex by the CLI.
std::uint64_t HashFile(const std::filesystem::path& path);
std::uint64_t HashBytes(std::span<const std::uint8_t> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace amc
