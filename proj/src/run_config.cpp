#include "amc/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "amc/error.hpp"

namespace amc {

namespace {

using nlohmann::json;

[[noreturn]] void Invalid(const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); }

// Walks one JSON object, handing out known keys and rejecting the rest.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) Invalid(Where() + " must be an object");
  }

  void Allow(std::initializer_list<const char*> keys) {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!allowed.contains(it.key())) Invalid("unknown key '" + Child(it.key()) + "'");
    }
  }

  bool Has(const char* key) const { return node_.contains(key); }
  const json& Raw(const char* key) const { return node_.at(key); }
  std::string Child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void Read(const char* key, T& out) const {
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      Invalid("key '" + Child(key) + "' has the wrong type");
    }
  }

 private:
  std::string Where() const { return path_.empty() ? "document" : "'" + path_ + "'"; }

  const json& node_;
  std::string path_;
};

std::vector<ModulationScheme> ParseSchemes(const json& list, const std::string& path) {
  if (!list.is_array()) Invalid("'" + path + "' must be an array of scheme names");
  std::vector<ModulationScheme> out;
  for (const auto& item : list) {
    if (!item.is_string()) Invalid("'" + path + "' must contain strings");
    try {
      out.push_back(ParseScheme(item.get<std::string>()));
    } catch (const Error& e) {
      Invalid("'" + path + "': " + e.what());
    }
  }
  return out;
}

PowerMode ParsePowerMode(const std::string& text, const std::string& path) {
  if (text == "UNIT") return PowerMode::kUnit;
  if (text == "MAGNITUDE_SQUARED") return PowerMode::kMagnitudeSquared;
  Invalid("'" + path + "' must be UNIT or MAGNITUDE_SQUARED");
}

void ApplyDataset(const json& node, DatasetSpec& d) {
  Section s(node, "dataset");
  s.Allow({"schemes", "snrs_db", "per_class", "master_seed", "jobs", "frame", "channel", "imaging"});
  if (s.Has("schemes")) d.schemes = ParseSchemes(s.Raw("schemes"), s.Child("schemes"));
  s.Read("snrs_db", d.snr_grid_db);
  s.Read("per_class", d.per_class_per_snr);
  s.Read("master_seed", d.master_seed);
  s.Read("jobs", d.jobs);

  if (s.Has("frame")) {
    Section f(s.Raw("frame"), "dataset.frame");
    f.Allow({"n_symbols", "samples_per_symbol", "sample_rate_hz", "filter_taps", "rrc_rolloff", "cpm_index",
             "gfsk_bt", "gmsk_bt", "gaussian_span_symbols"});
    f.Read("n_symbols", d.frame.n_symbols);
    f.Read("samples_per_symbol", d.frame.samples_per_symbol);
    f.Read("sample_rate_hz", d.frame.sample_rate_hz);
    f.Read("filter_taps", d.frame.pulse.filter_taps);
    f.Read("rrc_rolloff", d.frame.pulse.rrc_rolloff);
    f.Read("cpm_index", d.frame.pulse.cpm_index);
    f.Read("gfsk_bt", d.frame.pulse.gfsk_bt);
    f.Read("gmsk_bt", d.frame.pulse.gmsk_bt);
    f.Read("gaussian_span_symbols", d.frame.pulse.gaussian_span_symbols);
  }
  if (s.Has("channel")) {
    Section c(s.Raw("channel"), "dataset.channel");
    c.Allow({"path_delays_s", "path_gains_db"});
    c.Read("path_delays_s", d.channel.path_delays_s);
    c.Read("path_gains_db", d.channel.path_gains_db);
  }
  if (s.Has("imaging")) {
    Section im(s.Raw("imaging"), "dataset.imaging");
    im.Allow({"scale", "width_px", "height_px", "alphas", "cutoff_radius_px", "power_mode"});
    im.Read("scale", d.imaging.plane.scale);
    im.Read("width_px", d.imaging.plane.width_px);
    im.Read("height_px", d.imaging.plane.height_px);
    if (im.Has("alphas")) {
      std::vector<double> alphas;
      im.Read("alphas", alphas);
      if (alphas.size() != 3) Invalid("'dataset.imaging.alphas' must hold exactly three values");
      d.imaging.channels.alphas = {alphas[0], alphas[1], alphas[2]};
    }
    im.Read("cutoff_radius_px", d.imaging.channels.cutoff_radius_px);
    if (im.Has("power_mode")) {
      std::string mode;
      im.Read("power_mode", mode);
      d.imaging.channels.power_mode = ParsePowerMode(mode, "dataset.imaging.power_mode");
    }
  }
}

void ApplyModel(const json& node, vit::VitConfig& m) {
  Section s(node, "model");
  s.Allow({"preset", "image_height", "image_width", "channels", "patch", "embed_dim", "layers", "heads", "mlp_dim",
           "n_classes", "dropout"});
  if (s.Has("preset")) {
    std::string preset;
    s.Read("preset", preset);
    if (preset == "desk") {
      m = vit::VitConfig::Desk();
    } else if (preset == "paper") {
      m = vit::VitConfig::Paper();
    } else if (preset == "tiny") {
      m = vit::VitConfig::Tiny();
    } else {
      Invalid("'model.preset' must be desk, paper or tiny");
    }
  }
  s.Read("image_height", m.image_height);
  s.Read("image_width", m.image_width);
  s.Read("channels", m.channels);
  s.Read("patch", m.patch);
  s.Read("embed_dim", m.embed_dim);
  s.Read("layers", m.layers);
  s.Read("heads", m.heads);
  s.Read("mlp_dim", m.mlp_dim);
  s.Read("n_classes", m.n_classes);
  s.Read("dropout", m.dropout);
}

void ApplyTraining(const json& node, TrainingConfig& t) {
  Section s(node, "training");
  s.Allow({"epochs", "finetune_epochs", "batch_size", "learning_rate", "beta1", "beta2", "epsilon", "seed",
           "init_seed", "split_seed"});
  s.Read("epochs", t.epochs);
  s.Read("finetune_epochs", t.finetune_epochs);
  s.Read("batch_size", t.batch_size);
  s.Read("learning_rate", t.adam.learning_rate);
  s.Read("beta1", t.adam.beta1);
  s.Read("beta2", t.adam.beta2);
  s.Read("epsilon", t.adam.epsilon);
  s.Read("seed", t.seed);
  s.Read("init_seed", t.init_seed);
  s.Read("split_seed", t.split_seed);
}

std::vector<SplitConfig> ParseSplits(const json& node) {
  if (!node.is_array()) Invalid("'splits' must be an array");
  std::vector<SplitConfig> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    const std::string path = "splits[" + std::to_string(i) + "]";
    Section s(node[i], path);
    s.Allow({"name", "role", "snrs_db", "per_class", "data"});
    SplitConfig split;
    std::string role;
    s.Read("role", role);
    if (role.empty()) Invalid("'" + path + ".role' is required");
    try {
      split.spec.role = ParseSplitRole(role);
    } catch (const Error&) {
      Invalid("'" + path + ".role' must be one of BASE_TRAIN, VALIDATION, TEST_IN, TEST_OUT, FINETUNE_TRAIN");
    }
    s.Read("snrs_db", split.spec.snrs_db);
    s.Read("per_class", split.spec.per_class);
    s.Read("data", split.data);
    s.Read("name", split.name);
    if (split.name.empty()) split.name = std::string(SplitRoleName(split.spec.role)) + "_" + std::to_string(i);
    if (split.spec.snrs_db.empty()) Invalid("'" + path + ".snrs_db' must be non-empty");
    if (split.spec.per_class <= 0) Invalid("'" + path + ".per_class' must be positive");
    out.push_back(std::move(split));
  }
  return out;
}

const char* PowerModeName(PowerMode m) { return m == PowerMode::kUnit ? "UNIT" : "MAGNITUDE_SQUARED"; }

}  // namespace

RunConfig DefaultRunConfig() {
  RunConfig c;
  c.splits = {
      {"validation", {SplitRole::kValidation, {0, 4, 8}, 10}, ""},
      {"base_train", {SplitRole::kBaseTrain, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 60}, ""},
      {"test_in", {SplitRole::kTestIn, {0, 4, 10}, 20}, ""},
  };
  return c;
}

RunConfig ParseRunConfig(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    Invalid(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config = DefaultRunConfig();
  Section root(doc, "");
  root.Allow({"dataset", "model", "training", "splits"});
  if (root.Has("dataset")) ApplyDataset(root.Raw("dataset"), config.dataset);
  if (root.Has("model")) {
    ApplyModel(root.Raw("model"), config.model);
    config.model_from_file = true;
  }
  if (root.Has("training")) ApplyTraining(root.Raw("training"), config.training);
  if (root.Has("splits")) config.splits = ParseSplits(root.Raw("splits"));
  return config;
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseRunConfig(buffer.str());
}

std::string DumpRunConfig(const RunConfig& c) {
  nlohmann::ordered_json doc;
  auto& d = doc["dataset"];
  d["schemes"] = nlohmann::ordered_json::array();
  for (auto s : c.dataset.schemes) d["schemes"].push_back(std::string(SchemeName(s)));
  d["snrs_db"] = c.dataset.snr_grid_db;
  d["per_class"] = c.dataset.per_class_per_snr;
  d["master_seed"] = c.dataset.master_seed;
  d["jobs"] = c.dataset.jobs;
  const auto& f = c.dataset.frame;
  d["frame"] = {{"n_symbols", f.n_symbols},
                {"samples_per_symbol", f.samples_per_symbol},
                {"sample_rate_hz", f.sample_rate_hz},
                {"filter_taps", f.pulse.filter_taps},
                {"rrc_rolloff", f.pulse.rrc_rolloff},
                {"cpm_index", f.pulse.cpm_index},
                {"gfsk_bt", f.pulse.gfsk_bt},
                {"gmsk_bt", f.pulse.gmsk_bt},
                {"gaussian_span_symbols", f.pulse.gaussian_span_symbols}};
  d["channel"] = {{"path_delays_s", c.dataset.channel.path_delays_s},
                  {"path_gains_db", c.dataset.channel.path_gains_db}};
  const auto& im = c.dataset.imaging;
  d["imaging"] = {{"scale", im.plane.scale},
                  {"width_px", im.plane.width_px},
                  {"height_px", im.plane.height_px},
                  {"alphas", std::vector<double>(im.channels.alphas.begin(), im.channels.alphas.end())},
                  {"cutoff_radius_px", im.channels.cutoff_radius_px},
                  {"power_mode", PowerModeName(im.channels.power_mode)}};
  const auto& m = c.model;
  doc["model"] = {{"image_height", m.image_height}, {"image_width", m.image_width}, {"channels", m.channels},
                  {"patch", m.patch},               {"embed_dim", m.embed_dim},     {"layers", m.layers},
                  {"heads", m.heads},               {"mlp_dim", m.mlp_dim},         {"n_classes", m.n_classes},
                  {"dropout", m.dropout}};
  const auto& t = c.training;
  doc["training"] = {{"epochs", t.epochs},
                     {"finetune_epochs", t.finetune_epochs},
                     {"batch_size", t.batch_size},
                     {"learning_rate", t.adam.learning_rate},
                     {"beta1", t.adam.beta1},
                     {"beta2", t.adam.beta2},
                     {"epsilon", t.adam.epsilon},
                     {"seed", t.seed},
                     {"init_seed", t.init_seed},
                     {"split_seed", t.split_seed}};
  doc["splits"] = nlohmann::ordered_json::array();
  for (const auto& s : c.splits) {
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["role"] = std::string(SplitRoleName(s.spec.role));
    j["snrs_db"] = s.spec.snrs_db;
    j["per_class"] = s.spec.per_class;
    if (!s.data.empty()) j["data"] = s.data;
    doc["splits"].push_back(j);
  }
  return doc.dump(2) + "\n";
}

std::vector<std::size_t> SplitLineage(const RunConfig& config, std::size_t index) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i <= index && i < config.splits.size(); ++i) {
    if (config.splits[i].data == config.splits[index].data) out.push_back(i);
  }
  return out;
}

}  // namespace amc
