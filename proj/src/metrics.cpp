#include "amc/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "amc/error.hpp"
#include "amc/png_io.hpp"

namespace amc::metrics {

namespace {

[[noreturn]] void Malformed(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line) + ": " + what);
}

double Ratio(std::int64_t num, std::int64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double ParseDouble(const std::string& text, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) Malformed(line, "bad number '" + text + "'");
  return v;
}

}  // namespace

std::int64_t ConfusionMatrix::Total() const {
  std::int64_t total = 0;
  for (const auto& row : counts) {
    for (auto c : row) total += c;
  }
  return total;
}

ConfusionMatrix Confusion(const std::vector<PredictionRecord>& records, std::vector<std::string> class_names) {
  const int n = static_cast<int>(class_names.size());
  ConfusionMatrix cm;
  cm.class_names = std::move(class_names);
  cm.counts.assign(static_cast<std::size_t>(n), std::vector<std::int64_t>(static_cast<std::size_t>(n), 0));
  for (const auto& r : records) {
    if (r.label < 0 || r.label >= n || r.predicted < 0 || r.predicted >= n) {
      throw Error(ErrorCode::kLabelOutOfRange, "record (" + std::to_string(r.label) + " -> " +
                                                   std::to_string(r.predicted) + ") outside " + std::to_string(n) +
                                                   " classes");
    }
    ++cm.counts[static_cast<std::size_t>(r.label)][static_cast<std::size_t>(r.predicted)];
  }
  return cm;
}

MetricsReport Report(const ConfusionMatrix& cm) {
  const std::int64_t total = cm.Total();
  if (total <= 0) throw Error(ErrorCode::kEmptyMatrix, "confusion matrix has no records");
  const std::size_t n = cm.counts.size();
  MetricsReport r;
  r.precision.resize(n);
  r.recall.resize(n);
  r.f1.resize(n);
  r.support.resize(n);
  r.precision_undefined.resize(n);
  r.recall_undefined.resize(n);

  std::int64_t trace = 0;
  for (std::size_t c = 0; c < n; ++c) {
    const std::int64_t tp = cm.counts[c][c];
    std::int64_t predicted = 0;
    std::int64_t actual = 0;
    for (std::size_t k = 0; k < n; ++k) {
      predicted += cm.counts[k][c];
      actual += cm.counts[c][k];
    }
    trace += tp;
    bool undef = false;
    r.precision[c] = Ratio(tp, predicted, undef);
    r.precision_undefined[c] = undef;
    r.recall[c] = Ratio(tp, actual, undef);
    r.recall_undefined[c] = undef;
    const double sum = r.precision[c] + r.recall[c];
    r.f1[c] = sum > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / sum : 0.0;
    r.support[c] = actual;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  for (std::size_t c = 0; c < n; ++c) {
    r.macro_precision += r.precision[c];
    r.macro_recall += r.recall[c];
    r.macro_f1 += r.f1[c];
  }
  r.macro_precision /= static_cast<double>(n);
  r.macro_recall /= static_cast<double>(n);
  r.macro_f1 /= static_cast<double>(n);
  return r;
}

std::string ConfusionCsv(const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& name : cm.class_names) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < cm.counts.size(); ++r) {
    out << (r < cm.class_names.size() ? cm.class_names[r] : std::to_string(r));
    for (auto c : cm.counts[r]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

void WriteConfusionCsv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  const std::string text = ConfusionCsv(cm);
  WriteFileBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

RgbImage ConfusionHeatmap(const ConfusionMatrix& cm, int cell_px) {
  const int n = cm.size();
  RgbImage image(std::max(n, 1) * cell_px, std::max(n, 1) * cell_px);
  for (int r = 0; r < n; ++r) {
    std::int64_t row_total = 0;
    for (auto c : cm.counts[static_cast<std::size_t>(r)]) row_total += c;
    for (int c = 0; c < n; ++c) {
      const double frac =
          row_total > 0 ? static_cast<double>(cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) /
                              static_cast<double>(row_total)
                        : 0.0;
      const auto level = static_cast<std::uint8_t>(std::lround(255.0 * frac));
      for (int y = 0; y < cell_px; ++y) {
        for (int x = 0; x < cell_px; ++x) {
          for (int ch = 0; ch < 3; ++ch) image.at(r * cell_px + y, c * cell_px + x, ch) = level;
        }
      }
    }
  }
  return image;
}

void WriteConvergenceLog(const std::vector<ConvergenceRecord>& records, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_accuracy\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << Num(r.train_loss) << ',' << Num(r.val_loss) << ',' << Num(r.val_accuracy) << '\n';
  }
  const std::string text = out.str();
  WriteFileBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<ConvergenceRecord> ReadConvergenceLog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<ConvergenceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "epoch,train_loss,val_loss,val_accuracy") Malformed(line_no, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) Malformed(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    ConvergenceRecord r;
    const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), r.epoch);
    if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size()) Malformed(line_no, "bad epoch");
    r.train_loss = ParseDouble(fields[1], line_no);
    r.val_loss = ParseDouble(fields[2], line_no);
    r.val_accuracy = ParseDouble(fields[3], line_no);
    out.push_back(r);
  }
  if (line_no == 0) Malformed(1, "missing header");
  return out;
}

}  // namespace amc::metrics
