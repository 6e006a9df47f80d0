#include "amc/vit_train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "amc/error.hpp"
#include "amc/png_io.hpp"
#include "amc/rng.hpp"

namespace amc::vit {

namespace {

void CheckCompatible(const LabeledImages& data, const VitConfig& c, const char* what) {
  if (data.size() == 0) throw Error(ErrorCode::kShapeError, std::string(what) + " set is empty");
  if (data.channels != c.channels || data.height != c.image_height || data.width != c.image_width) {
    throw Error(ErrorCode::kShapeError, std::string(what) + " images are " + std::to_string(data.height) + "x" +
                                            std::to_string(data.width) + ", model expects " +
                                            std::to_string(c.image_height) + "x" + std::to_string(c.image_width));
  }
  for (int label : data.labels) {
    if (label < 0 || label >= c.n_classes) {
      throw Error(ErrorCode::kShapeError, std::string(what) + " label " + std::to_string(label) +
                                              " does not fit a " + std::to_string(c.n_classes) + "-class head");
    }
  }
}

bool SameBits(const Matrix<float>& a, const Matrix<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data(),
                    [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
}

}  // namespace

std::span<const float> LabeledImages::Image(std::size_t i) const {
  const std::size_t n = static_cast<std::size_t>(channels) * height * width;
  return std::span<const float>(pixels).subspan(i * n, n);
}

void LabeledImages::Append(const RgbImage& image, int label, double snr_db) {
  if (labels.empty()) {
    height = image.height;
    width = image.width;
    channels = 3;
  } else if (image.height != height || image.width != width) {
    throw Error(ErrorCode::kShapeError, "mixed image sizes in one image set");
  }
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < image.height; ++r) {
      for (int c = 0; c < image.width; ++c) pixels.push_back(static_cast<float>(image.at(r, c, ch)) / 255.0f);
    }
  }
  labels.push_back(label);
  snrs_db.push_back(snr_db);
}

Batch<float> LabeledImages::Gather(std::span<const std::size_t> rows) const {
  Batch<float> batch;
  batch.channels = channels;
  batch.height = height;
  batch.width = width;
  const std::size_t n = static_cast<std::size_t>(channels) * height * width;
  batch.images.reserve(rows.size() * n);
  for (std::size_t r : rows) {
    const auto img = Image(r);
    batch.images.insert(batch.images.end(), img.begin(), img.end());
    batch.labels.push_back(labels[r]);
  }
  return batch;
}

std::vector<float> ImageToTensor(const RgbImage& image, const VitConfig& config) {
  if (config.channels != 3) throw Error(ErrorCode::kShapeError, "RGB images need a 3-channel model");
  if (image.height <= 0 || config.image_height % image.height != 0 || config.image_width % image.width != 0 ||
      config.image_height / image.height != config.image_width / image.width) {
    throw Error(ErrorCode::kShapeError, "image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                                            " cannot be replicated to " + std::to_string(config.image_height) + "x" +
                                            std::to_string(config.image_width));
  }
  const RgbImage up = Upscale(image, config.image_height / image.height);
  LabeledImages tmp;
  tmp.Append(up, 0, 0.0);
  return tmp.pixels;
}

LabeledImages LoadImages(const Manifest& entries, const std::filesystem::path& root, const VitConfig& config) {
  LabeledImages data;
  data.channels = config.channels;
  data.height = config.image_height;
  data.width = config.image_width;
  for (const ManifestEntry& e : entries) {
    const RgbImage image = ReadPng(root / e.path);
    const auto tensor = ImageToTensor(image, config);
    data.pixels.insert(data.pixels.end(), tensor.begin(), tensor.end());
    data.labels.push_back(e.label);
    data.snrs_db.push_back(e.snr_db);
  }
  return data;
}

Evaluation Evaluate(const ParameterSet<float>& params, const VitConfig& config, const LabeledImages& data,
                    int batch_size) {
  CheckCompatible(data, config, "evaluation");
  Evaluation ev;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::size_t> rows;
  const std::size_t step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < data.size(); start += step) {
    rows.resize(std::min(step, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Batch<float> batch = data.Gather(rows);
    const Matrix<float> logits = Forward(batch, params, config);
    loss_sum += static_cast<double>(CrossEntropy(logits, batch.labels)) * static_cast<double>(rows.size());
    for (int i = 0; i < batch.size(); ++i) {
      const int predicted = ArgMax<float>(std::span<const float>(logits.row(i).data(), static_cast<std::size_t>(logits.cols())));
      if (predicted == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  ev.loss = loss_sum / static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

TrainResult Train(const Checkpoint& start, const LabeledImages& train, const LabeledImages& val,
                  const TrainOptions& options) {
  const VitConfig& config = start.config;
  config.Validate();
  start.params.CheckShapes(config);
  CheckCompatible(train, config, "training");
  CheckCompatible(val, config, "validation");
  if (options.epochs < 0) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 0");
  if (options.batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");

  TrainResult result;
  Checkpoint state = start;
  if (state.optimizer.first.size() != state.params.size()) {
    state.optimizer = AdamState<float>::Zeros(state.params);
  }
  std::set<double> snrs(train.snrs_db.begin(), train.snrs_db.end());
  state.train_snrs_db.assign(snrs.begin(), snrs.end());
  state.best_val_loss = std::numeric_limits<double>::infinity();
  state.best_val_accuracy = -1.0;
  result.best = state;

  const CounterRng root(options.seed);
  std::vector<std::size_t> order(train.size());
  const std::size_t batch_size = static_cast<std::size_t>(options.batch_size);

  for (int e = 1; e <= options.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffle_rng = root.Split(static_cast<std::uint64_t>(state.epoch + 1));
    Shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - first);
      const Batch<float> batch = train.Gather(std::span(order).subspan(first, count));
      const ForwardOptions fwd{true, HashCombine(options.seed, static_cast<std::uint64_t>(state.optimizer.step))};
      const LossAndGradients<float> lg = Backward(batch, state.params, config, fwd);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::kDivergedLoss, "non-finite loss at epoch " + std::to_string(state.epoch + 1) +
                                                  ", step " + std::to_string(state.optimizer.step + 1));
      }
      AdamStep(state.params, lg.gradients, state.optimizer, options.adam);
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(count);
      ++result.steps;
    }
    state.epoch += 1;

    const Evaluation ev = Evaluate(state.params, config, val, options.batch_size);
    EpochRecord record{state.epoch, loss_sum / static_cast<double>(train.size()), ev.loss, ev.accuracy, false};
    const bool better_loss = ev.loss < state.best_val_loss;
    const bool better_accuracy = ev.accuracy > state.best_val_accuracy;
    if (better_loss) state.best_val_loss = ev.loss;
    if (better_accuracy) state.best_val_accuracy = ev.accuracy;
    if (better_loss || better_accuracy) {
      record.saved = true;
      result.best = state;
      if (!options.checkpoint_path.empty()) SaveCheckpoint(state, options.checkpoint_path);
    }
    result.log.push_back(record);
    if (options.on_epoch) options.on_epoch(record);
  }
  result.last = std::move(state);
  if (options.epochs == 0 && !options.checkpoint_path.empty()) SaveCheckpoint(result.best, options.checkpoint_path);
  return result;
}

void FreezeAllButHead(ParameterSet<float>& params, const VitConfig& config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    params.frozen[i] = i != ParamIndex::HeadWeight(config) && i != ParamIndex::HeadBias(config);
  }
}

TrainResult FineTune(const Checkpoint& base, const LabeledImages& train, const LabeledImages& val,
                     const TrainOptions& options) {
  Checkpoint start = base;
  FreezeAllButHead(start.params, start.config);
  start.optimizer = AdamState<float>::Zeros(start.params);
  TrainResult result = Train(start, train, val, options);

  for (const Checkpoint* ck : {&result.best, &result.last}) {
    for (std::size_t i = 0; i < ck->params.size(); ++i) {
      if (ck->params.frozen[i] && !SameBits(ck->params[i], base.params[i])) {
        throw Error(ErrorCode::kShapeError, "frozen array " + ck->params.names[i] + " changed during fine-tuning");
      }
    }
  }
  return result;
}

std::vector<Prediction> Predict(const Checkpoint& checkpoint, const LabeledImages& data, int batch_size) {
  const VitConfig& config = checkpoint.config;
  CheckCompatible(data, config, "prediction");
  std::vector<Prediction> out;
  out.reserve(data.size());
  std::vector<std::size_t> rows;
  const std::size_t step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < data.size(); start += step) {
    rows.resize(std::min(step, data.size() - start));
    std::iota(rows.begin(), rows.end(), start);
    const Batch<float> batch = data.Gather(rows);
    const Matrix<float> logits = Forward(batch, checkpoint.params, config);
    for (int i = 0; i < batch.size(); ++i) {
      Prediction p;
      p.label = batch.labels[static_cast<std::size_t>(i)];
      p.logits.assign(logits.row(i).data(), logits.row(i).data() + logits.cols());
      p.predicted = ArgMax<float>(p.logits);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace amc::vit
