#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "amc/vit_model.hpp"

namespace amc::vit {

inline constexpr int kCheckpointVersion = 1;

/// Model, optimizer and bookkeeping needed to resume or evaluate a run.
struct Checkpoint {
  VitConfig config;
  ParameterSet<float> params;
  AdamState<float> optimizer;
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_accuracy = -1.0;  // negative until a validation pass ran
  std::vector<double> train_snrs_db;  // SNRs seen by the most recent training run

  /// Fresh model with InitParameters and zeroed optimizer moments.
  static Checkpoint Initial(const VitConfig& config, std::uint64_t seed);
};

/// File layout:
///   line 1   "AMC-VIT-CHECKPOINT <version>\n"
///   line 2   one-line JSON header: config, epoch, metrics, optimizer step,
///            and a table {name, rows, cols, offset, frozen} for parameters
///            and for the Adam first/second moments
///   payload  little-endian IEEE-754 float32 arrays at the listed byte
///            offsets (relative to the payload start), row-major
std::vector<std::uint8_t> SerializeCheckpoint(const Checkpoint& checkpoint);

/// Throws Error(kMalformedRecord) for structural problems and
/// Error(kShapeError) when arrays do not match the stored config.
Checkpoint DeserializeCheckpoint(std::span<const std::uint8_t> bytes);

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace amc::vit
