#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amc/imaging.hpp"

namespace amc::metrics {

struct PredictionRecord {
  int label = 0;
  int predicted = 0;
};

/// counts[true][predicted].
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::int64_t>> counts;

  int size() const { return static_cast<int>(counts.size()); }
  std::int64_t Total() const;
};

/// Throws Error(kLabelOutOfRange) when a label or prediction is outside
/// [0, class_names.size()).
ConfusionMatrix Confusion(const std::vector<PredictionRecord>& records, std::vector<std::string> class_names);

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::int64_t> support;      // true count per class
  std::vector<bool> precision_undefined;  // class never predicted
  std::vector<bool> recall_undefined;     // class never present
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Per-class precision, recall and F1 with undefined ratios scored as 0 and
/// flagged; macro values are unweighted means over all classes.
/// Throws Error(kEmptyMatrix) when the matrix holds no records.
MetricsReport Report(const ConfusionMatrix& cm);

/// Comma-separated matrix with a header row of predicted class names and a
/// leading column of true class names.
std::string ConfusionCsv(const ConfusionMatrix& cm);
void WriteConfusionCsv(const ConfusionMatrix& cm, const std::filesystem::path& path);

/// Grayscale heatmap, intensity proportional to row-normalized counts,
/// `cell_px` pixels per cell.
RgbImage ConfusionHeatmap(const ConfusionMatrix& cm, int cell_px = 16);

struct ConvergenceRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// CSV with header "epoch,train_loss,val_loss,val_accuracy"; values are
/// written with 17 significant digits so reading returns identical doubles.
void WriteConvergenceLog(const std::vector<ConvergenceRecord>& records, const std::filesystem::path& path);

/// Throws Error(kMalformedRecord) naming the line, or Error(kIoError).
std::vector<ConvergenceRecord> ReadConvergenceLog(const std::filesystem::path& path);

}  // namespace amc::metrics
