// amc: dataset generation, training, fine-tuning, evaluation and rendering.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "amc/checkpoint.hpp"
#include "amc/dataset.hpp"
#include "amc/error.hpp"
#include "amc/imaging.hpp"
#include "amc/metrics.hpp"
#include "amc/png_io.hpp"
#include "amc/run_config.hpp"
#include "amc/vit_train.hpp"

namespace fs = std::filesystem;
using namespace amc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr const char* kOutputRootEnv = "AMC_OUTPUT_ROOT";

fs::path Resolve(const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  const char* root = std::getenv(kOutputRootEnv);
  if (root == nullptr || *root == '\0') return p;
  return fs::path(root) / p;
}

std::string JoinSnrs(const std::vector<double>& snrs) {
  std::vector<std::string> parts;
  for (double s : snrs) parts.push_back(FormatSnr(s));
  return fmt::format("{}", fmt::join(parts, ", "));
}

std::string Hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  RunConfig config = DefaultRunConfig();

  void Load() {
    if (!config_path.empty()) config = LoadRunConfig(config_path);
  }
};

void AddConfigOption(CLI::App* cmd, Common& common) {
  cmd->add_option("-c,--config", common.config_path, "JSON run config; flags override its fields")
      ->check(CLI::ExistingFile);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string out = "data";
  std::uint64_t seed = 0;
  std::vector<std::string> schemes;
  std::vector<double> snrs;
  int per_class = 0;
  int jobs = 0;
  int symbols = 0;
  int sps = 0;
  double scale = 0;
  int size = 0;
  double cutoff = 0;
};

void RegisterGenerate(CLI::App& app, Common& common, GenerateArgs& a) {
  const DatasetSpec d;
  a.per_class = d.per_class_per_snr;
  a.symbols = d.frame.n_symbols;
  a.sps = d.frame.samples_per_symbol;
  a.scale = d.imaging.plane.scale;
  a.size = d.imaging.plane.width_px;
  a.cutoff = d.imaging.channels.cutoff_radius_px;
  for (auto s : d.schemes) a.schemes.emplace_back(SchemeName(s));
  a.snrs = d.snr_grid_db;

  CLI::App* cmd = app.add_subcommand("generate", "Synthesize a labelled constellation image dataset");
  AddConfigOption(cmd, common);
  cmd->add_option("-o,--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Master seed")->capture_default_str();
  cmd->add_option("--schemes", a.schemes, "Comma-separated schemes")->delimiter(',')->capture_default_str();
  cmd->add_option("--snrs", a.snrs, "Comma-separated SNR grid in dB")->delimiter(',')->capture_default_str();
  cmd->add_option("--per-class", a.per_class, "Images per scheme per SNR")->capture_default_str();
  cmd->add_option("-j,--jobs", a.jobs, "Worker threads, 0 = logical cores")->capture_default_str();
  cmd->add_option("--symbols", a.symbols, "Symbols per frame")->capture_default_str();
  cmd->add_option("--sps", a.sps, "Samples per symbol")->capture_default_str();
  cmd->add_option("--scale", a.scale, "Half-width of the I/Q window")->capture_default_str();
  cmd->add_option("--size", a.size, "Image width and height in pixels")->capture_default_str();
  cmd->add_option("--cutoff", a.cutoff, "Decay cutoff radius in pixels")->capture_default_str();
}

int RunGenerate(CLI::App* cmd, Common& common, const GenerateArgs& a) {
  common.Load();
  DatasetSpec spec = common.config.dataset;
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--schemes")) {
    spec.schemes.clear();
    for (const auto& s : a.schemes) spec.schemes.push_back(ParseScheme(s));
  }
  if (given("--snrs")) spec.snr_grid_db = a.snrs;
  if (given("--per-class")) spec.per_class_per_snr = a.per_class;
  if (given("--seed")) spec.master_seed = a.seed;
  if (given("--jobs")) spec.jobs = a.jobs;
  if (given("--symbols")) spec.frame.n_symbols = a.symbols;
  if (given("--sps")) spec.frame.samples_per_symbol = a.sps;
  if (given("--scale")) spec.imaging.plane.scale = a.scale;
  if (given("--size")) spec.imaging.plane.width_px = spec.imaging.plane.height_px = a.size;
  if (given("--cutoff")) spec.imaging.channels.cutoff_radius_px = a.cutoff;
  spec.output_dir = Resolve(a.out);

  const GenerationSummary summary = GenerateDataset(spec);

  fmt::print("{:<8}", "scheme");
  for (double snr : spec.snr_grid_db) fmt::print(" {:>6}", FormatSnr(snr));
  fmt::print("\n");
  for (auto scheme : spec.schemes) {
    fmt::print("{:<8}", SchemeName(scheme));
    for (double snr : spec.snr_grid_db) {
      const auto it = summary.counts.find({SchemeLabel(scheme), SnrMillibels(snr)});
      fmt::print(" {:>6}", it == summary.counts.end() ? 0 : it->second);
    }
    fmt::print("\n");
  }
  fmt::print("images: {}\n", summary.manifest.size());
  fmt::print("dropped samples (outside window): {}\n", summary.dropped_samples);
  fmt::print("manifest: {}\n", summary.manifest_path.string());
  fmt::print("manifest hash: {}\n", Hex(HashFile(summary.manifest_path)));
  return 0;
}

// ---------------------------------------------------------------- splits

struct DrawnSplit {
  std::size_t index = 0;
  fs::path data_dir;
  Manifest entries;
};

fs::path SplitDataDir(const SplitConfig& split, const fs::path& default_data) {
  return split.data.empty() ? default_data : Resolve(split.data);
}

DrawnSplit DrawSplit(const RunConfig& rc, std::size_t index, const fs::path& default_data) {
  DrawnSplit out;
  out.index = index;
  out.data_dir = SplitDataDir(rc.splits[index], default_data);
  const Manifest manifest = LoadManifest(out.data_dir / kManifestFileName, true);
  std::vector<SplitSpec> specs;
  for (std::size_t i : SplitLineage(rc, index)) specs.push_back(rc.splits[i].spec);
  try {
    out.entries = DrawDisjointSplits(manifest, specs, rc.training.split_seed).back();
  } catch (const Error& e) {
    throw Error(e.code(), "split '" + rc.splits[index].name + "' from " + out.data_dir.string() + ": " + e.what());
  }
  return out;
}

std::optional<std::size_t> FindSplit(const RunConfig& rc, SplitRole role) {
  for (std::size_t i = 0; i < rc.splits.size(); ++i) {
    if (rc.splits[i].spec.role == role) return i;
  }
  return std::nullopt;
}

// Validation split on the same data as `train`, else the first one.
std::size_t FindValidation(const RunConfig& rc, std::size_t train) {
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < rc.splits.size(); ++i) {
    if (rc.splits[i].spec.role != SplitRole::kValidation) continue;
    if (rc.splits[i].data == rc.splits[train].data) return i;
    if (!first) first = i;
  }
  if (!first) throw Error(ErrorCode::kInvalidConfig, "config has no VALIDATION split");
  return *first;
}

vit::LabeledImages Load(const DrawnSplit& s, const vit::VitConfig& model) {
  return vit::LoadImages(s.entries, s.data_dir, model);
}

// ---------------------------------------------------------------- train / finetune

struct TrainArgs {
  std::string data = "data";
  std::string out;
  std::string log;
  std::string checkpoint;  // starting point
  std::string model;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0;
  double dropout = 0;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t split_seed = 0;
  std::vector<double> train_snrs;
  int train_per_class = 0;
  std::vector<double> val_snrs;
  int val_per_class = 0;
};

void RegisterTrainOptions(CLI::App* cmd, Common& common, TrainArgs& a, bool finetune) {
  const RunConfig rc = DefaultRunConfig();
  a.out = finetune ? "checkpoints/finetuned.ckpt" : "checkpoints/base.ckpt";
  a.epochs = finetune ? rc.training.finetune_epochs : rc.training.epochs;
  a.batch_size = rc.training.batch_size;
  a.lr = rc.training.adam.learning_rate;
  a.dropout = rc.model.dropout;
  a.train_per_class = 10;
  a.val_per_class = 10;

  AddConfigOption(cmd, common);
  cmd->add_option("-d,--data", a.data, "Dataset directory for splits without their own 'data'")
      ->capture_default_str();
  cmd->add_option("-o,--out", a.out, "Checkpoint to write")->capture_default_str();
  cmd->add_option("--log", a.log, "Convergence CSV (default: <out>.log.csv)");
  if (finetune) {
    cmd->add_option("--checkpoint", a.checkpoint, "Base checkpoint to fine-tune")->required();
  } else {
    cmd->add_option("--checkpoint", a.checkpoint, "Resume from this checkpoint instead of a fresh model");
    cmd->add_option("--model", a.model, "Architecture preset: desk, paper or tiny (default: config, else desk)")
        ->check(CLI::IsMember({"desk", "paper", "tiny"}));
    cmd->add_option("--dropout", a.dropout, "Dropout rate")->capture_default_str();
    cmd->add_option("--init-seed", a.init_seed, "Parameter initialization seed")->capture_default_str();
  }
  cmd->add_option("--epochs", a.epochs, "Epochs")->capture_default_str();
  cmd->add_option("--batch-size", a.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", a.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Shuffle and dropout seed")->capture_default_str();
  cmd->add_option("--split-seed", a.split_seed, "Split drawing seed")->capture_default_str();
  const char* train_role = finetune ? "FINETUNE_TRAIN" : "BASE_TRAIN";
  cmd->add_option("--train-snrs", a.train_snrs, fmt::format("Override the {} split SNRs", train_role))
      ->delimiter(',');
  cmd->add_option("--train-per-class", a.train_per_class,
                  fmt::format("Override the {} split per-class count", train_role))
      ->capture_default_str();
  cmd->add_option("--val-snrs", a.val_snrs, "Override the VALIDATION split SNRs")->delimiter(',');
  cmd->add_option("--val-per-class", a.val_per_class, "Override the VALIDATION split per-class count")
      ->capture_default_str();
}

int RunTrain(CLI::App* cmd, Common& common, const TrainArgs& a, bool finetune) {
  common.Load();
  RunConfig rc = common.config;
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--epochs")) {
    (finetune ? rc.training.finetune_epochs : rc.training.epochs) = a.epochs;
  }
  if (given("--batch-size")) rc.training.batch_size = a.batch_size;
  if (given("--lr")) rc.training.adam.learning_rate = a.lr;
  if (given("--seed")) rc.training.seed = a.seed;
  if (given("--split-seed")) rc.training.split_seed = a.split_seed;
  if (!finetune) {
    if (given("--init-seed")) rc.training.init_seed = a.init_seed;
    if (given("--model")) {
      rc.model = a.model == "paper" ? vit::VitConfig::Paper()
                 : a.model == "tiny" ? vit::VitConfig::Tiny()
                                     : vit::VitConfig::Desk();
    }
    if (given("--dropout")) rc.model.dropout = a.dropout;
  }

  const SplitRole train_role = finetune ? SplitRole::kFinetuneTrain : SplitRole::kBaseTrain;
  std::optional<std::size_t> train_index = FindSplit(rc, train_role);
  if (!train_index) {
    if (!given("--train-snrs")) {
      throw Error(ErrorCode::kInvalidConfig,
                  fmt::format("config has no {} split; pass --train-snrs", SplitRoleName(train_role)));
    }
    rc.splits.push_back({std::string(SplitRoleName(train_role)), {train_role, a.train_snrs, a.train_per_class}, ""});
    train_index = rc.splits.size() - 1;
  } else {
    if (given("--train-snrs")) rc.splits[*train_index].spec.snrs_db = a.train_snrs;
    if (given("--train-per-class")) rc.splits[*train_index].spec.per_class = a.train_per_class;
  }
  const std::size_t val_index = FindValidation(rc, *train_index);
  if (given("--val-snrs")) rc.splits[val_index].spec.snrs_db = a.val_snrs;
  if (given("--val-per-class")) rc.splits[val_index].spec.per_class = a.val_per_class;

  vit::Checkpoint start;
  if (!a.checkpoint.empty()) {
    start = vit::LoadCheckpoint(Resolve(a.checkpoint));
    if (rc.model_from_file && !(rc.model == start.config)) {
      throw Error(ErrorCode::kShapeError, "checkpoint architecture differs from the config 'model' section");
    }
  } else {
    start = vit::Checkpoint::Initial(rc.model, rc.training.init_seed);
  }
  const vit::VitConfig& model = start.config;

  const fs::path data = Resolve(a.data);
  const DrawnSplit train_split = DrawSplit(rc, *train_index, data);
  const DrawnSplit val_split = DrawSplit(rc, val_index, data);
  const vit::LabeledImages train = Load(train_split, model);
  const vit::LabeledImages val = Load(val_split, model);

  const fs::path out = Resolve(a.out);
  const fs::path log = a.log.empty() ? fs::path(out.string() + ".log.csv") : Resolve(a.log);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (log.has_parent_path()) fs::create_directories(log.parent_path());

  vit::TrainOptions opt;
  opt.epochs = finetune ? rc.training.finetune_epochs : rc.training.epochs;
  opt.batch_size = rc.training.batch_size;
  opt.adam = rc.training.adam;
  opt.seed = rc.training.seed;
  opt.checkpoint_path = out;
  opt.on_epoch = [](const vit::EpochRecord& r) {
    fmt::print("epoch {:>4}  train_loss {:.6f}  val_loss {:.6f}  val_acc {:.4f}{}\n", r.epoch, r.train_loss,
               r.val_loss, r.val_accuracy, r.saved ? "  *saved" : "");
    std::fflush(stdout);
  };

  fmt::print("{}: {} train images (SNRs {}), {} validation images (SNRs {})\n", finetune ? "finetune" : "train",
             train.size(), JoinSnrs(rc.splits[*train_index].spec.snrs_db), val.size(),
             JoinSnrs(rc.splits[val_index].spec.snrs_db));
  fmt::print("model: {}x{}x{}, patch {}, dim {}, {} layers, {} heads, mlp {}, {} classes\n", model.image_height,
             model.image_width, model.channels, model.patch, model.embed_dim, model.layers, model.heads,
             model.mlp_dim, model.n_classes);

  const vit::TrainResult result = finetune ? vit::FineTune(start, train, val, opt) : vit::Train(start, train, val, opt);

  std::vector<metrics::ConvergenceRecord> records;
  for (const auto& r : result.log) records.push_back({r.epoch, r.train_loss, r.val_loss, r.val_accuracy});
  metrics::WriteConvergenceLog(records, log);

  fmt::print("epochs run: {}, optimizer steps: {}\n", result.log.size(), result.steps);
  if (std::isfinite(result.best.best_val_loss)) {
    fmt::print("best val_loss {:.6f}, best val_acc {:.4f}\n", result.best.best_val_loss,
               result.best.best_val_accuracy);
  }
  fmt::print("checkpoint: {}\nconvergence log: {}\n", out.string(), log.string());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data = "data";
  std::string checkpoint;
  std::string out = "eval";
  std::vector<std::string> splits;
  std::vector<double> snrs;
  int per_class = 20;
  int batch_size = 128;
  std::uint64_t split_seed = 0;
};

void RegisterEval(CLI::App* cmd, Common& common, EvalArgs& a) {
  AddConfigOption(cmd, common);
  cmd->add_option("-d,--data", a.data, "Dataset directory for splits without their own 'data'")
      ->capture_default_str();
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint to evaluate")->required();
  cmd->add_option("-o,--out", a.out, "Report directory")->capture_default_str();
  cmd->add_option("--split", a.splits, "Evaluate these named splits (default: every TEST_IN/TEST_OUT split)");
  cmd->add_option("--snrs", a.snrs, "Evaluate an extra test split at these SNRs instead")->delimiter(',');
  cmd->add_option("--per-class", a.per_class, "Per-class count for --snrs")->capture_default_str();
  cmd->add_option("--batch-size", a.batch_size, "Inference batch size")->capture_default_str();
  cmd->add_option("--split-seed", a.split_seed, "Split drawing seed")->capture_default_str();
}

std::string Distribution(const std::vector<double>& split_snrs, const std::vector<double>& train_snrs) {
  std::set<std::int64_t> seen;
  for (double s : train_snrs) seen.insert(SnrMillibels(s));
  std::size_t inside = 0;
  for (double s : split_snrs) inside += seen.contains(SnrMillibels(s)) ? 1 : 0;
  if (inside == split_snrs.size()) return "In";
  if (inside == 0) return "Out";
  return "Mixed";
}

std::vector<std::string> ClassNames(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) {
    names.emplace_back(i < kNumSchemes ? std::string(SchemeName(SchemeFromLabel(i))) : std::to_string(i));
  }
  return names;
}

void WriteConfusion(const metrics::ConfusionMatrix& cm, const fs::path& dir, const std::string& stem) {
  metrics::WriteConfusionCsv(cm, dir / (stem + "_confusion.csv"));
  WritePng(dir / (stem + "_confusion.png"), metrics::ConfusionHeatmap(cm));
}

int RunEval(CLI::App* cmd, Common& common, const EvalArgs& a) {
  common.Load();
  RunConfig rc = common.config;
  if (cmd->count("--split-seed") > 0) rc.training.split_seed = a.split_seed;

  const fs::path ckpt_path = Resolve(a.checkpoint);
  const vit::Checkpoint ckpt = vit::LoadCheckpoint(ckpt_path);
  if (rc.model_from_file && !(rc.model == ckpt.config)) {
    const auto& m = rc.model;
    const auto& c = ckpt.config;
    throw Error(ErrorCode::kShapeError,
                fmt::format("checkpoint {} holds a {}x{} P={} D={} L={} model, config expects {}x{} P={} D={} L={}",
                            ckpt_path.string(), c.image_height, c.image_width, c.patch, c.embed_dim, c.layers,
                            m.image_height, m.image_width, m.patch, m.embed_dim, m.layers));
  }

  // In/Out is relative to base training: the first BASE_TRAIN split of the
  // config, else whatever the checkpoint was last trained on.
  std::vector<double> base_snrs = ckpt.train_snrs_db;
  for (const auto& s : rc.splits) {
    if (s.spec.role == SplitRole::kBaseTrain) {
      base_snrs = s.spec.snrs_db;
      break;
    }
  }
  std::size_t adhoc = rc.splits.size() + 1;

  std::vector<std::size_t> selected;
  if (!a.snrs.empty()) {
    adhoc = rc.splits.size();
    rc.splits.push_back({"cli_test", {SplitRole::kTestOut, a.snrs, a.per_class}, ""});
    selected.push_back(rc.splits.size() - 1);
  } else if (!a.splits.empty()) {
    for (const auto& name : a.splits) {
      const auto it = std::find_if(rc.splits.begin(), rc.splits.end(), [&](const SplitConfig& s) { return s.name == name; });
      if (it == rc.splits.end()) throw Error(ErrorCode::kInvalidConfig, "no split named '" + name + "'");
      selected.push_back(static_cast<std::size_t>(it - rc.splits.begin()));
    }
  } else {
    for (std::size_t i = 0; i < rc.splits.size(); ++i) {
      const SplitRole r = rc.splits[i].spec.role;
      if (r == SplitRole::kTestIn || r == SplitRole::kTestOut) selected.push_back(i);
    }
  }
  if (selected.empty()) throw Error(ErrorCode::kInvalidConfig, "no test splits to evaluate; pass --snrs or --split");

  const fs::path out = Resolve(a.out);
  fs::create_directories(out);
  const fs::path data = Resolve(a.data);
  const auto names = ClassNames(ckpt.config.n_classes);

  struct Row {
    std::string name;
    std::string snrs;
    std::string distribution;
    std::size_t samples = 0;
    metrics::MetricsReport report;
  };
  std::vector<Row> rows;
  std::vector<metrics::PredictionRecord> all;

  for (std::size_t index : selected) {
    const SplitConfig& split = rc.splits[index];
    const DrawnSplit drawn = DrawSplit(rc, index, data);
    const vit::LabeledImages images = Load(drawn, ckpt.config);
    std::vector<metrics::PredictionRecord> records;
    for (const auto& p : vit::Predict(ckpt, images, a.batch_size)) records.push_back({p.label, p.predicted});
    all.insert(all.end(), records.begin(), records.end());
    const auto cm = metrics::Confusion(records, names);
    WriteConfusion(cm, out, split.name);
    std::string distribution = Distribution(split.spec.snrs_db, base_snrs);
    if (index != adhoc && split.spec.role == SplitRole::kTestIn) distribution = "In";
    if (index != adhoc && split.spec.role == SplitRole::kTestOut) distribution = "Out";
    rows.push_back({split.name, JoinSnrs(split.spec.snrs_db), distribution, records.size(), metrics::Report(cm)});
  }
  const auto overall_cm = metrics::Confusion(all, names);
  const auto overall = metrics::Report(overall_cm);
  WriteConfusion(overall_cm, out, "overall");

  fmt::print("checkpoint: {} (epoch {}, trained on SNRs {})\n", ckpt_path.string(), ckpt.epoch,
             ckpt.train_snrs_db.empty() ? std::string("none") : JoinSnrs(ckpt.train_snrs_db));
  fmt::print("{:<16} {:<22} {:<12} {:>7} {:>12} {:>10} {:>8} {:>8}\n", "Split", "SNRs (dB)", "Distribution",
             "Samples", "Accuracy (%)", "Precision", "Recall", "F1");
  auto print_row = [](const std::string& name, const std::string& snrs, const std::string& dist, std::size_t n,
                      const metrics::MetricsReport& r) {
    fmt::print("{:<16} {:<22} {:<12} {:>7} {:>12.2f} {:>10.4f} {:>8.4f} {:>8.4f}\n", name, snrs, dist, n,
               100.0 * r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1);
  };
  for (const auto& row : rows) print_row(row.name, row.snrs, row.distribution, row.samples, row.report);
  print_row("overall", "", "", all.size(), overall);

  fmt::print("\n{:<8} {:>10} {:>8} {:>8} {:>8}\n", "Class", "Precision", "Recall", "F1", "Support");
  for (std::size_t c = 0; c < names.size(); ++c) {
    fmt::print("{:<8} {:>10.4f} {:>8.4f} {:>8.4f} {:>8}{}\n", names[c], overall.precision[c], overall.recall[c],
               overall.f1[c], overall.support[c],
               overall.precision_undefined[c] || overall.recall_undefined[c] ? "  (undefined ratio scored 0)" : "");
  }

  nlohmann::ordered_json report;
  report["checkpoint"] = ckpt_path.string();
  report["train_snrs_db"] = ckpt.train_snrs_db;
  auto to_json = [](const metrics::MetricsReport& r) {
    return nlohmann::ordered_json{{"accuracy", r.accuracy},
                                  {"macro_precision", r.macro_precision},
                                  {"macro_recall", r.macro_recall},
                                  {"macro_f1", r.macro_f1},
                                  {"precision", r.precision},
                                  {"recall", r.recall},
                                  {"f1", r.f1},
                                  {"support", r.support}};
  };
  report["splits"] = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    auto j = to_json(row.report);
    j["name"] = row.name;
    j["snrs_db"] = row.snrs;
    j["distribution"] = row.distribution;
    j["samples"] = row.samples;
    report["splits"].push_back(j);
  }
  report["overall"] = to_json(overall);
  report["overall"]["samples"] = all.size();
  report["overall"]["confusion_total"] = overall_cm.Total();
  const std::string text = report.dump(2) + "\n";
  WriteFileBytes(out / "report.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  fmt::print("\nreport: {}\n", (out / "report.json").string());
  return 0;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string scheme;
  double snr = 10.0;
  std::uint64_t seed = 0;
  std::string out = "render";
  int zoom = 4;
};

void RegisterRender(CLI::App* cmd, Common& common, RenderArgs& a) {
  AddConfigOption(cmd, common);
  cmd->add_option("--scheme", a.scheme, "Modulation scheme")->required();
  cmd->add_option("--snr", a.snr, "SNR in dB")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Master seed (image 0 of a dataset with this seed)")->capture_default_str();
  cmd->add_option("-o,--out", a.out, "Output directory")->capture_default_str();
  cmd->add_option("--zoom", a.zoom, "Integer upscaling of the written PNGs")->capture_default_str()->check(
      CLI::PositiveNumber);
}

RgbImage SideBySide(const std::vector<RgbImage>& parts, int gap) {
  int width = 0;
  int height = 0;
  for (const auto& p : parts) {
    width += p.width;
    height = std::max(height, p.height);
  }
  width += gap * static_cast<int>(parts.size() - 1);
  RgbImage panel(width, height);
  std::fill(panel.pixels.begin(), panel.pixels.end(), std::uint8_t{128});
  int x0 = 0;
  for (const auto& p : parts) {
    for (int r = 0; r < p.height; ++r) {
      for (int c = 0; c < p.width; ++c) {
        for (int ch = 0; ch < 3; ++ch) panel.at(r, x0 + c, ch) = p.at(r, c, ch);
      }
    }
    x0 += p.width + gap;
  }
  return panel;
}

int RunRender(Common& common, const RenderArgs& a) {
  common.Load();
  const DatasetSpec& spec = common.config.dataset;
  const ModulationScheme scheme = ParseScheme(a.scheme);
  const std::uint64_t frame_seed = DeriveFrameSeed(a.seed, scheme, a.snr, 0);
  const SynthesizedFrame frame = SynthesizeFrame(spec, scheme, a.snr, frame_seed);
  const auto& samples = frame.received.samples;
  const ImagePlaneSpec& plane = spec.imaging.plane;
  const ThreeChannelParams& ch = spec.imaging.channels;

  const RgbImage gray = GrayToRgb(RasterizeGray(samples, plane).grid);
  const RgbImage enhanced =
      GrayToRgb(EnhanceGray(samples, plane, {ch.alphas[0], ch.cutoff_radius_px, ch.power_mode}).grid);
  const RgbImage& rgb = frame.image;

  const fs::path out = Resolve(a.out);
  fs::create_directories(out);
  const std::string stem = fmt::format("{}_{}dB", SchemeName(scheme), FormatSnr(a.snr));
  const std::vector<RgbImage> parts = {Upscale(gray, a.zoom), Upscale(enhanced, a.zoom), Upscale(rgb, a.zoom)};
  const char* kinds[] = {"gray", "enhanced", "rgb"};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const fs::path p = out / fmt::format("{}_{}.png", stem, kinds[i]);
    WritePng(p, parts[i]);
    fmt::print("{}\n", p.string());
  }
  const fs::path panel = out / fmt::format("{}_panel.png", stem);
  WritePng(panel, SideBySide(parts, 2 * a.zoom));
  fmt::print("{}\n", panel.string());
  fmt::print("frame seed: {}, samples outside window: {}\n", Hex(frame_seed), frame.dropped);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constellation-image modulation classification toolkit"};
  app.require_subcommand(1);
  app.footer(fmt::format("Relative paths other than --config are resolved under ${} when it is set.", kOutputRootEnv));
  bool dump_config = false;
  std::string dump_from;
  app.add_flag("--dump-config", dump_config, "Print the effective config (defaults, or --config-file) and exit");
  app.add_option("--config-file", dump_from, "Config to show with --dump-config")->check(CLI::ExistingFile);

  Common common;
  GenerateArgs gen;
  TrainArgs train;
  TrainArgs finetune;
  EvalArgs eval;
  RenderArgs render;

  RegisterGenerate(app, common, gen);
  CLI::App* train_cmd = app.add_subcommand("train", "Train a classifier from scratch (or resume)");
  RegisterTrainOptions(train_cmd, common, train, false);
  CLI::App* finetune_cmd = app.add_subcommand("finetune", "Fine-tune only the classifier head of a checkpoint");
  RegisterTrainOptions(finetune_cmd, common, finetune, true);
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on test splits");
  RegisterEval(eval_cmd, common, eval);
  CLI::App* render_cmd = app.add_subcommand("render", "Render one frame's gray, enhanced and RGB encodings");
  RegisterRender(render_cmd, common, render);

  // --dump-config does not need a subcommand.
  for (int i = 1; i < argc; ++i) {
    if (std::string_view(argv[i]) == "--dump-config") app.require_subcommand(0, 1);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (dump_config) {
      const RunConfig rc = dump_from.empty() ? DefaultRunConfig() : LoadRunConfig(dump_from);
      std::cout << DumpRunConfig(rc);
      return 0;
    }
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "generate") return RunGenerate(cmd, common, gen);
    if (name == "train") return RunTrain(cmd, common, train, false);
    if (name == "finetune") return RunTrain(cmd, common, finetune, true);
    if (name == "eval") return RunEval(cmd, common, eval);
    if (name == "render") return RunRender(common, render);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
