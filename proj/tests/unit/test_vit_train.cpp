#include <bit>
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"

#include "amc/rng.hpp"
#include "amc/vit_train.hpp"

using namespace amc;
using namespace amc::vit;

namespace {

// Two trivially separable classes: bright top half vs bright bottom half.
LabeledImages Stripes(const VitConfig& c, int per_class, std::uint64_t seed) {
  CounterRng rng(seed);
  LabeledImages d;
  d.channels = c.channels;
  d.height = c.image_height;
  d.width = c.image_width;
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    for (int ch = 0; ch < c.channels; ++ch) {
      for (int y = 0; y < c.image_height; ++y) {
        for (int x = 0; x < c.image_width; ++x) {
          const bool top = y < c.image_height / 2;
          const float base = (top == (label == 0)) ? 0.9f : 0.1f;
          d.pixels.push_back(base + 0.05f * static_cast<float>(rng.Uniform()));
        }
      }
    }
    d.labels.push_back(label);
    d.snrs_db.push_back(label == 0 ? 0.0 : 10.0);
  }
  return d;
}

TrainOptions FastOptions(int epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = 8;
  o.adam.learning_rate = 1e-2;
  o.seed = 3;
  return o;
}

bool BitEqual(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (Eigen::Index k = 0; k < a[i].size(); ++k) {
      if (std::bit_cast<std::uint32_t>(a[i].data()[k]) != std::bit_cast<std::uint32_t>(b[i].data()[k])) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("image tensors replicate pixels to the model size") {
  VitConfig c = VitConfig::Tiny();
  RgbImage img(4, 4);
  img.at(1, 2, 0) = 255;
  img.at(3, 3, 2) = 51;
  const auto t = ImageToTensor(img, c);
  REQUIRE(t.size() == 3u * 8 * 8);
  auto at = [&](int ch, int y, int x) { return t[static_cast<std::size_t>((ch * 8 + y) * 8 + x)]; };
  CHECK(at(0, 2, 4) == 1.0f);
  CHECK(at(0, 3, 5) == 1.0f);
  CHECK(at(0, 2, 6) == 0.0f);
  CHECK(at(2, 7, 7) == doctest::Approx(0.2f));
  CHECK_AMC_ERROR(ImageToTensor(RgbImage(3, 3), c), ErrorCode::kShapeError);
}

TEST_CASE("zero epochs returns the starting parameters") {
  const VitConfig c = VitConfig::Tiny();
  const Checkpoint start = Checkpoint::Initial(c, 1);
  const LabeledImages data = Stripes(c, 4, 1);
  const TrainResult r = Train(start, data, data, FastOptions(0));
  CHECK(r.log.empty());
  CHECK(r.steps == 0);
  CHECK(BitEqual(r.last.params, start.params));
  CHECK(r.last.epoch == 0);
  CHECK(r.last.train_snrs_db == std::vector<double>{0.0, 10.0});
}

TEST_CASE("training overfits a separable toy set") {
  const VitConfig c = VitConfig::Tiny();
  const LabeledImages data = Stripes(c, 16, 2);
  std::vector<EpochRecord> seen;
  TrainOptions o = FastOptions(15);
  o.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const TrainResult r = Train(Checkpoint::Initial(c, 2), data, data, o);
  REQUIRE(r.log.size() == 15);
  CHECK(seen == r.log);
  CHECK(r.steps == 15 * 4);
  CHECK(r.log.back().train_loss < r.log.front().train_loss);
  CHECK(r.log.back().val_accuracy == 1.0);
  CHECK(r.log.front().saved);
  for (std::size_t i = 0; i < r.log.size(); ++i) CHECK(r.log[i].epoch == static_cast<int>(i) + 1);

  // The best checkpoint belongs to the last epoch that fired the save rule.
  int last_saved = 0;
  for (const auto& e : r.log) {
    if (e.saved) last_saved = e.epoch;
  }
  CHECK(r.best.epoch == last_saved);
  CHECK(r.last.epoch == 15);
  CHECK(Evaluate(r.last.params, c, data).accuracy == 1.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const VitConfig c = VitConfig::Tiny();
  const LabeledImages data = Stripes(c, 6, 4);
  const TrainResult a = Train(Checkpoint::Initial(c, 5), data, data, FastOptions(3));
  const TrainResult b = Train(Checkpoint::Initial(c, 5), data, data, FastOptions(3));
  CHECK(a.log == b.log);
  CHECK(BitEqual(a.last.params, b.last.params));
  TrainOptions other = FastOptions(3);
  other.seed = 4;
  CHECK_FALSE(BitEqual(Train(Checkpoint::Initial(c, 5), data, data, other).last.params, a.last.params));
}

TEST_CASE("resuming continues epoch numbering") {
  const VitConfig c = VitConfig::Tiny();
  const LabeledImages data = Stripes(c, 4, 6);
  const TrainResult first = Train(Checkpoint::Initial(c, 7), data, data, FastOptions(2));
  const TrainResult second = Train(first.last, data, data, FastOptions(2));
  REQUIRE(second.log.size() == 2);
  CHECK(second.log[0].epoch == 3);
  CHECK(second.last.optimizer.step == first.last.optimizer.step + 2);
}

TEST_CASE("fine-tuning only moves the head") {
  const VitConfig c = VitConfig::Tiny();
  const LabeledImages data = Stripes(c, 8, 8);
  const Checkpoint base = Train(Checkpoint::Initial(c, 9), data, data, FastOptions(2)).last;
  const TrainResult ft = FineTune(base, data, data, FastOptions(3));
  for (std::size_t i = 0; i < base.params.size(); ++i) {
    const bool head = i == ParamIndex::HeadWeight(c) || i == ParamIndex::HeadBias(c);
    CHECK(ft.last.params.frozen[i] == !head);
    if (!head) {
      CHECK(ft.last.params[i] == base.params[i]);
    }
  }
  CHECK(ft.last.params[ParamIndex::HeadWeight(c)] != base.params[ParamIndex::HeadWeight(c)]);
  CHECK(ft.last.optimizer.step == 6);
  CHECK(ft.log.front().epoch == base.epoch + 1);
}

TEST_CASE("training rejects mismatched data and options") {
  const VitConfig c = VitConfig::Tiny();
  const Checkpoint start = Checkpoint::Initial(c, 1);
  LabeledImages data = Stripes(c, 2, 1);
  TrainOptions o = FastOptions(1);
  o.batch_size = 0;
  CHECK_AMC_ERROR(Train(start, data, data, o), ErrorCode::kInvalidConfig);
  CHECK_AMC_ERROR(Train(start, LabeledImages{}, data, FastOptions(1)), ErrorCode::kShapeError);
  LabeledImages bad = data;
  bad.labels[0] = 10;
  CHECK_AMC_ERROR(Train(start, bad, data, FastOptions(1)), ErrorCode::kShapeError);

  Checkpoint huge = start;
  huge.params[ParamIndex::HeadBias(c)](0, 0) = std::numeric_limits<float>::infinity();
  CHECK_AMC_ERROR(Train(huge, data, data, FastOptions(1)), ErrorCode::kDivergedLoss);
}

TEST_CASE("predict returns eval-mode argmax per image") {
  VitConfig c = VitConfig::Tiny();
  c.dropout = 0.3;
  Checkpoint ck = Checkpoint::Initial(c, 11);
  const LabeledImages data = Stripes(c, 5, 12);
  ck.params[ParamIndex::HeadBias(c)](0, 7) = 1.0f;
  const auto preds = Predict(ck, data, 3);
  REQUIRE(preds.size() == data.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].label == data.labels[i]);
    CHECK(preds[i].logits.size() == 10u);
    CHECK(preds[i].predicted == 7);
  }
  CHECK(Predict(ck, data, 100)[4].logits == preds[4].logits);
}

TEST_CASE("head-only fine-tuning improves a frozen base on a separable set") {
  const VitConfig c = VitConfig::Tiny();
  const LabeledImages data = Stripes(c, 10, 13);
  const Checkpoint base = Checkpoint::Initial(c, 14);
  const double before = Evaluate(base.params, c, data).accuracy;
  TrainOptions o = FastOptions(30);
  o.adam.learning_rate = 5e-2;
  const TrainResult ft = FineTune(base, data, data, o);
  const double after = Evaluate(ft.last.params, c, data).accuracy;
  INFO("before ", before, " after ", after);
  CHECK(after > before);
  CHECK(after >= 0.9);
}
