#include <algorithm>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"

#include "amc/metrics.hpp"
#include "amc/rng.hpp"

using namespace amc;
using namespace amc::metrics;

namespace {

std::vector<std::string> Names(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

std::vector<PredictionRecord> RandomRecords(int n_classes, int count, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<PredictionRecord> out;
  for (int i = 0; i < count; ++i) {
    const int label = static_cast<int>(rng.Below(static_cast<std::uint64_t>(n_classes)));
    // Bias towards correct predictions so every ratio is exercised.
    const int predicted = rng.Uniform() < 0.6 ? label : static_cast<int>(rng.Below(static_cast<std::uint64_t>(n_classes)));
    out.push_back({label, predicted});
  }
  return out;
}

void WriteText(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("two-class example") {
  // Labels (0,0,1), predictions (0,1,1): counts [[1,1],[0,1]].
  const auto cm = Confusion({{0, 0}, {0, 1}, {1, 1}}, Names(2));
  CHECK(cm.counts == std::vector<std::vector<std::int64_t>>{{1, 1}, {0, 1}});
  const auto r = Report(cm);
  CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision[0] == 1.0);
  CHECK(r.recall[0] == 0.5);
  CHECK(r.f1[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.precision[1] == 0.5);
  CHECK(r.recall[1] == 1.0);
  CHECK(r.f1[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r.macro_f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.support == std::vector<std::int64_t>{2, 1});
}

TEST_CASE("perfect predictions score one everywhere") {
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({i % 10, i % 10});
  const auto r = Report(Confusion(recs, Names(10)));
  CHECK(r.accuracy == 1.0);
  for (int c = 0; c < 10; ++c) {
    CHECK(r.precision[static_cast<std::size_t>(c)] == 1.0);
    CHECK(r.recall[static_cast<std::size_t>(c)] == 1.0);
    CHECK(r.f1[static_cast<std::size_t>(c)] == 1.0);
  }
}

TEST_CASE("undefined ratios score zero and are flagged") {
  // Class 2 never occurs and is never predicted; class 1 is never predicted.
  const auto r = Report(Confusion({{0, 0}, {1, 0}}, Names(3)));
  CHECK(r.precision_undefined == std::vector<bool>{false, true, true});
  CHECK(r.recall_undefined == std::vector<bool>{false, false, true});
  CHECK(r.precision[1] == 0.0);
  CHECK(r.recall[1] == 0.0);
  CHECK(r.f1[2] == 0.0);
  CHECK(r.precision[0] == 0.5);
  CHECK(r.macro_precision == doctest::Approx(0.5 / 3.0));
}

TEST_CASE("report matches a brute-force oracle on random records") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(trial % 9);
    const auto recs = RandomRecords(k, 50 + static_cast<int>(trial) * 17, trial);
    const auto cm = Confusion(recs, Names(k));
    CHECK(cm.Total() == static_cast<std::int64_t>(recs.size()));
    const auto r = Report(cm);

    int correct = 0;
    for (const auto& x : recs) correct += x.label == x.predicted;
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(recs.size())));
    for (int c = 0; c < k; ++c) {
      int tp = 0, fp = 0, fn = 0;
      for (const auto& x : recs) {
        tp += x.label == c && x.predicted == c;
        fp += x.label != c && x.predicted == c;
        fn += x.label == c && x.predicted != c;
      }
      const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
      const double rc = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
      const double f = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
      const auto i = static_cast<std::size_t>(c);
      CHECK(r.precision[i] == doctest::Approx(p));
      CHECK(r.recall[i] == doctest::Approx(rc));
      CHECK(r.f1[i] == doctest::Approx(f));
      CHECK(r.f1[i] <= std::max(r.precision[i], r.recall[i]) + 1e-15);
      CHECK(r.f1[i] >= std::min(r.precision[i], r.recall[i]) - 1e-15);
      CHECK(r.precision[i] >= 0.0);
      CHECK(r.precision[i] <= 1.0);
    }
  }
}

TEST_CASE("record order does not change the matrix") {
  auto recs = RandomRecords(5, 200, 77);
  const auto cm = Confusion(recs, Names(5));
  CounterRng rng(78);
  Shuffle(recs.begin(), recs.end(), rng);
  CHECK(Confusion(recs, Names(5)).counts == cm.counts);
}

TEST_CASE("confusion errors") {
  CHECK_AMC_ERROR(Confusion({{0, 2}}, Names(2)), ErrorCode::kLabelOutOfRange);
  CHECK_AMC_ERROR(Confusion({{-1, 0}}, Names(2)), ErrorCode::kLabelOutOfRange);
  CHECK_AMC_ERROR(Report(Confusion({}, Names(3))), ErrorCode::kEmptyMatrix);
}

TEST_CASE("confusion csv layout") {
  const auto cm = Confusion({{0, 0}, {0, 1}, {1, 1}}, {"OOK", "GMSK"});
  CHECK(ConfusionCsv(cm) == "true\\predicted,OOK,GMSK\nOOK,1,1\nGMSK,0,1\n");
  testing::TempDir dir("csv");
  WriteConfusionCsv(cm, dir.path() / "c.csv");
  std::ifstream in(dir.path() / "c.csv");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == ConfusionCsv(cm));
}

TEST_CASE("heatmap intensity follows row-normalized counts") {
  const auto cm = Confusion({{0, 0}, {0, 0}, {0, 0}, {0, 1}, {1, 1}}, Names(3));
  const RgbImage img = ConfusionHeatmap(cm, 4);
  CHECK(img.width == 12);
  CHECK(img.height == 12);
  CHECK(img.at(0, 0, 0) == 191);
  CHECK(img.at(3, 7, 1) == 64);
  CHECK(img.at(5, 5, 2) == 255);
  CHECK(img.at(5, 0, 0) == 0);
  CHECK(img.at(11, 11, 0) == 0);
}

TEST_CASE("convergence log round trips exactly") {
  testing::TempDir dir("conv");
  std::vector<ConvergenceRecord> recs;
  CounterRng rng(5);
  for (int e = 1; e <= 10; ++e) recs.push_back({e, rng.Uniform() * 3, 1.0 / 3.0 + rng.Normal(), rng.Uniform()});
  WriteConvergenceLog(recs, dir.path() / "log.csv");
  const auto back = ReadConvergenceLog(dir.path() / "log.csv");
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].epoch == recs[i].epoch);
    CHECK(back[i].train_loss == recs[i].train_loss);
    CHECK(back[i].val_loss == recs[i].val_loss);
    CHECK(back[i].val_accuracy == recs[i].val_accuracy);
  }
  WriteConvergenceLog({}, dir.path() / "empty.csv");
  CHECK(ReadConvergenceLog(dir.path() / "empty.csv").empty());
}

TEST_CASE("malformed convergence logs name the line") {
  testing::TempDir dir("convbad");
  const auto p = dir.path() / "log.csv";
  auto expect = [&](const std::string& text, const char* needle) {
    WriteText(p, text);
    try {
      ReadConvergenceLog(p);
      FAIL("expected MalformedRecord");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMalformedRecord);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  const std::string header = "epoch,train_loss,val_loss,val_accuracy\n";
  expect("", "line 1");
  expect("epoch,loss\n", "line 1");
  expect(header + "1,0.5,0.4,0.9\n2,0.5,0.4\n", "line 3");
  expect(header + "x,0.5,0.4,0.9\n", "line 2");
  expect(header + "1,0.5,abc,0.9\n", "line 2");
  CHECK_AMC_ERROR(ReadConvergenceLog(dir.path() / "none.csv"), ErrorCode::kIoError);
}
