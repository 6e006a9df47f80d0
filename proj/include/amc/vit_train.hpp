#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "amc/checkpoint.hpp"
#include "amc/dataset.hpp"
#include "amc/vit_model.hpp"

namespace amc::vit {

/// In-memory labelled images, C x H x W floats in [0, 1].
struct LabeledImages {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::vector<int> labels;
  std::vector<double> snrs_db;

  std::size_t size() const { return labels.size(); }
  std::span<const float> Image(std::size_t i) const;
  void Append(const RgbImage& image, int label, double snr_db);

  /// Batch of the given rows, in order.
  Batch<float> Gather(std::span<const std::size_t> rows) const;
};

/// Loads manifest images (paths relative to `root`) and upsamples them by
/// nearest-neighbour replication to the model resolution. Throws
/// Error(kShapeError) unless the model size is an integer multiple.
LabeledImages LoadImages(const Manifest& entries, const std::filesystem::path& root, const VitConfig& config);

/// Converts an RGB image at model resolution (or an integer fraction of it)
/// into C x H x W floats.
std::vector<float> ImageToTensor(const RgbImage& image, const VitConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool saved = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainOptions {
  int epochs = 50;
  int batch_size = 128;
  AdamOptions adam;
  std::uint64_t seed = 0;
  /// Written every time the checkpoint rule fires, when non-empty.
  std::filesystem::path checkpoint_path;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;  // last checkpoint the save rule selected
  Checkpoint last;  // state after the final epoch
  std::vector<EpochRecord> log;
  std::int64_t steps = 0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation Evaluate(const ParameterSet<float>& params, const VitConfig& config, const LabeledImages& data,
                    int batch_size = 128);

/// Epoch loop with a seeded shuffle. After each epoch the validation set is
/// scored, and a checkpoint is taken whenever validation loss hits a new
/// minimum or validation accuracy a new maximum. Bests are tracked per call.
/// Throws Error(kDivergedLoss) on a non-finite loss, Error(kShapeError) on
/// config/data mismatches.
TrainResult Train(const Checkpoint& start, const LabeledImages& train, const LabeledImages& val,
                  const TrainOptions& options);

/// Freezes every array except the classifier head weight and bias, resets
/// the optimizer, and trains. Frozen arrays come back bit-identical.
TrainResult FineTune(const Checkpoint& base, const LabeledImages& train, const LabeledImages& val,
                     const TrainOptions& options);

/// Marks every array frozen except head.weight and head.bias.
void FreezeAllButHead(ParameterSet<float>& params, const VitConfig& config);

struct Prediction {
  int label = 0;
  int predicted = 0;
  std::vector<float> logits;
};

/// Eval-mode forward over every image; argmax ties go to the lowest class.
std::vector<Prediction> Predict(const Checkpoint& checkpoint, const LabeledImages& data, int batch_size = 128);

}  // namespace amc::vit
