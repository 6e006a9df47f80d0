#include "amc/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <string>

#include "json.hpp"

#include "amc/error.hpp"
#include "amc/png_io.hpp"

namespace amc::vit {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "AMC-VIT-CHECKPOINT";

[[noreturn]] void Malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformedRecord, "checkpoint: " + what);
}

json ConfigToJson(const VitConfig& c) {
  return json{{"image_height", c.image_height}, {"image_width", c.image_width}, {"channels", c.channels},
              {"patch", c.patch},               {"embed_dim", c.embed_dim},     {"layers", c.layers},
              {"heads", c.heads},               {"mlp_dim", c.mlp_dim},         {"n_classes", c.n_classes},
              {"dropout", c.dropout}};
}

VitConfig ConfigFromJson(const json& j) {
  VitConfig c;
  c.image_height = j.at("image_height").get<int>();
  c.image_width = j.at("image_width").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch = j.at("patch").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

// JSON has no infinity; unset metrics are stored as null.
json MetricToJson(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void AppendArray(std::vector<std::uint8_t>& payload, const Matrix<float>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(m.data()[i]);
    for (int b = 0; b < 4; ++b) payload.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
}

Matrix<float> ReadArray(std::span<const std::uint8_t> payload, std::size_t offset, int rows, int cols) {
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (rows < 0 || cols < 0 || offset > payload.size() || count * 4 > payload.size() - offset) {
    Malformed("array extends past the end of the payload");
  }
  Matrix<float> m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[offset + i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    m.data()[i] = std::bit_cast<float>(bits);
  }
  return m;
}

}  // namespace

Checkpoint Checkpoint::Initial(const VitConfig& config, std::uint64_t seed) {
  Checkpoint c;
  c.config = config;
  c.params = InitParameters<float>(config, seed);
  c.optimizer = AdamState<float>::Zeros(c.params);
  return c;
}

std::vector<std::uint8_t> SerializeCheckpoint(const Checkpoint& ck) {
  ck.config.Validate();
  ck.params.CheckShapes(ck.config);
  const bool has_moments = !ck.optimizer.first.empty();
  if (has_moments && (ck.optimizer.first.size() != ck.params.size() || ck.optimizer.second.size() != ck.params.size())) {
    throw Error(ErrorCode::kShapeError, "optimizer state does not match the parameter set");
  }

  std::vector<std::uint8_t> payload;
  json arrays = json::array();
  auto add = [&](const std::string& name, const Matrix<float>& m, bool frozen) {
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()},
                      {"frozen", frozen}});
    AppendArray(payload, m);
  };
  for (std::size_t i = 0; i < ck.params.size(); ++i) add(ck.params.names[i], ck.params[i], ck.params.frozen[i]);
  if (has_moments) {
    for (std::size_t i = 0; i < ck.params.size(); ++i) add("adam.m/" + ck.params.names[i], ck.optimizer.first[i], false);
    for (std::size_t i = 0; i < ck.params.size(); ++i) add("adam.v/" + ck.params.names[i], ck.optimizer.second[i], false);
  }

  json header = {{"version", kCheckpointVersion},
                 {"config", ConfigToJson(ck.config)},
                 {"epoch", ck.epoch},
                 {"best_val_loss", MetricToJson(ck.best_val_loss)},
                 {"best_val_accuracy", MetricToJson(ck.best_val_accuracy)},
                 {"train_snrs_db", ck.train_snrs_db},
                 {"optimizer_step", ck.optimizer.step},
                 {"has_moments", has_moments},
                 {"payload_bytes", payload.size()},
                 {"arrays", arrays}};

  const std::string head = std::string(kMagic) + " " + std::to_string(kCheckpointVersion) + "\n" + header.dump() + "\n";
  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.insert(bytes.end(), payload.begin(), payload.end());
  return bytes;
}

Checkpoint DeserializeCheckpoint(std::span<const std::uint8_t> bytes) {
  auto line_end = [&](std::size_t from) {
    for (std::size_t i = from; i < bytes.size(); ++i) {
      if (bytes[i] == '\n') return i;
    }
    Malformed("truncated header");
  };
  const std::size_t first = line_end(0);
  const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(first));
  if (magic.rfind(std::string(kMagic) + " ", 0) != 0) Malformed("bad magic line");
  int version = 0;
  const char* vbegin = magic.data() + kMagic.size() + 1;
  const auto [vend, verr] = std::from_chars(vbegin, magic.data() + magic.size(), version);
  if (verr != std::errc{} || vend != magic.data() + magic.size()) Malformed("bad version in " + magic);
  if (version != kCheckpointVersion) Malformed("unsupported version " + magic);
  const std::size_t second = line_end(first + 1);

  json header;
  try {
    header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(first + 1),
                         bytes.begin() + static_cast<std::ptrdiff_t>(second));
  } catch (const json::exception& e) {
    Malformed(std::string("header: ") + e.what());
  }
  const auto payload = bytes.subspan(second + 1);

  Checkpoint ck;
  try {
    if (header.at("payload_bytes").get<std::size_t>() != payload.size()) Malformed("payload size mismatch");
    ck.config = ConfigFromJson(header.at("config"));
    ck.epoch = header.at("epoch").get<int>();
    const auto& loss = header.at("best_val_loss");
    ck.best_val_loss = loss.is_null() ? std::numeric_limits<double>::infinity() : loss.get<double>();
    const auto& acc = header.at("best_val_accuracy");
    ck.best_val_accuracy = acc.is_null() ? -1.0 : acc.get<double>();
    ck.train_snrs_db = header.at("train_snrs_db").get<std::vector<double>>();
    ck.optimizer.step = header.at("optimizer_step").get<std::int64_t>();

    const json& arrays = header.at("arrays");
    const bool has_moments = header.at("has_moments").get<bool>();
    ck.config.Validate();
    ck.params = ParameterSet<float>::Zeros(ck.config);
    const std::size_t n = ck.params.size();
    if (arrays.size() != (has_moments ? 3 * n : n)) {
      throw Error(ErrorCode::kShapeError, "checkpoint holds " + std::to_string(arrays.size()) +
                                              " arrays, config implies " + std::to_string(n));
    }
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      const json& a = arrays[i];
      Matrix<float> m = ReadArray(payload, a.at("offset").get<std::size_t>(), a.at("rows").get<int>(),
                                  a.at("cols").get<int>());
      const std::size_t slot = i % n;
      if (m.rows() != ck.params[slot].rows() || m.cols() != ck.params[slot].cols()) {
        throw Error(ErrorCode::kShapeError, "array " + a.at("name").get<std::string>() + " has the wrong shape");
      }
      if (i < n) {
        if (a.at("name").get<std::string>() != ck.params.names[i]) Malformed("unexpected array " + a.at("name").get<std::string>());
        ck.params[i] = std::move(m);
        ck.params.frozen[i] = a.at("frozen").get<bool>();
      } else if (i < 2 * n) {
        ck.optimizer.first.push_back(std::move(m));
      } else {
        ck.optimizer.second.push_back(std::move(m));
      }
    }
    if (!has_moments) {
      const auto step = ck.optimizer.step;
      ck.optimizer = AdamState<float>::Zeros(ck.params);
      ck.optimizer.step = step;
    }
  } catch (const json::exception& e) {
    Malformed(std::string("header field: ") + e.what());
  }
  return ck;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  WriteFileBytes(path, SerializeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) { return DeserializeCheckpoint(ReadFileBytes(path)); }

}  // namespace amc::vit
