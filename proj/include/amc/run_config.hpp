#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "amc/dataset.hpp"
#include "amc/vit_model.hpp"

namespace amc {

struct TrainingConfig {
  int epochs = 50;
  int finetune_epochs = 100;
  int batch_size = 128;
  vit::AdamOptions adam;
  std::uint64_t seed = 0;        // shuffling and dropout
  std::uint64_t init_seed = 0;   // parameter initialization
  std::uint64_t split_seed = 0;  // split drawing
};

/// One named subset of a dataset. `data` is the dataset directory; empty
/// means the directory given on the command line.
struct SplitConfig {
  std::string name;
  SplitSpec spec;
  std::string data;
};

/// Everything a CLI run needs. Loaded from JSON; see DescribeRunConfig().
struct RunConfig {
  DatasetSpec dataset;
  vit::VitConfig model = vit::VitConfig::Desk();
  bool model_from_file = false;  // true when the file had a "model" section
  TrainingConfig training;
  std::vector<SplitConfig> splits;
};

/// Defaults: desk-scale model, 32x32 images at scale 2.5, all ten schemes on
/// the 0..10 dB grid, and a base protocol of VALIDATION {0,4,8} x 10,
/// BASE_TRAIN {0..10} x 60 and TEST_IN {0,4,10} x 20 per class.
RunConfig DefaultRunConfig();

/// Overlays a JSON document on the defaults. Unknown keys are rejected with
/// their full path, e.g. "dataset.frame.n_symbol". Throws Error(kInvalidConfig).
RunConfig ParseRunConfig(std::string_view json_text);
RunConfig LoadRunConfig(const std::filesystem::path& path);

/// Serializes every field (the inverse of ParseRunConfig).
std::string DumpRunConfig(const RunConfig& config);

/// Splits of `config` that target the same dataset directory as splits[index],
/// in file order up to and including index. Drawing these in order reproduces
/// the disjoint draw every command sees.
std::vector<std::size_t> SplitLineage(const RunConfig& config, std::size_t index);

}  // namespace amc
