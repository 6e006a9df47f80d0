#include "amc/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "amc/error.hpp"
#include "amc/png_io.hpp"
#include "amc/rng.hpp"

namespace amc {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kModulationStream = 0;
constexpr std::uint64_t kNoiseStream = 1;

int ResolveJobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

[[noreturn]] void Malformed(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kMalformedRecord, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

void DatasetSpec::Validate() const {
  if (schemes.empty()) throw Error(ErrorCode::kInvalidSpec, "dataset needs at least one scheme");
  std::set<ModulationScheme> unique(schemes.begin(), schemes.end());
  if (unique.size() != schemes.size()) throw Error(ErrorCode::kInvalidSpec, "duplicate scheme in dataset");
  if (snr_grid_db.empty()) throw Error(ErrorCode::kInvalidSpec, "dataset needs at least one SNR");
  std::set<std::int64_t> snrs;
  for (double s : snr_grid_db) {
    if (!std::isfinite(s)) throw Error(ErrorCode::kInvalidSpec, "SNR grid values must be finite");
    if (!snrs.insert(SnrMillibels(s)).second) {
      throw Error(ErrorCode::kInvalidSpec, "duplicate SNR " + FormatSnr(s) + " dB");
    }
  }
  if (per_class_per_snr <= 0) throw Error(ErrorCode::kInvalidSpec, "per_class_per_snr must be positive");
  frame.Validate();
  channel.Validate();
  imaging.plane.Validate();
  DelaysInSamples(channel.path_delays_s, frame.sample_rate_hz);
}

std::int64_t SnrMillibels(double snr_db) { return std::llround(snr_db * 100.0); }

std::string FormatSnr(double snr_db) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), snr_db);
  return std::string(buf, result.ptr);
}

std::uint64_t DeriveFrameSeed(std::uint64_t master_seed, ModulationScheme scheme, double snr_db,
                              std::uint64_t index) {
  std::uint64_t h = Mix64(master_seed);
  h = HashCombine(h, static_cast<std::uint64_t>(SchemeLabel(scheme)));
  h = HashCombine(h, static_cast<std::uint64_t>(SnrMillibels(snr_db)));
  h = HashCombine(h, index);
  return h;
}

std::string EntryPath(ModulationScheme scheme, double snr_db, std::uint64_t index) {
  return std::string(SchemeName(scheme)) + "/" + FormatSnr(snr_db) + "/" + std::to_string(index) + ".png";
}

SynthesizedFrame SynthesizeFrame(const DatasetSpec& spec, ModulationScheme scheme, double snr_db,
                                 std::uint64_t frame_seed) {
  FrameSpec frame = spec.frame;
  frame.scheme = scheme;
  frame.rng_seed = HashCombine(frame_seed, kModulationStream);
  ChannelConfig channel = spec.channel;
  channel.snr_db = snr_db;
  channel.rng_seed = HashCombine(frame_seed, kNoiseStream);

  SynthesizedFrame out;
  out.clean = ModulateFrame(frame);
  out.received = ApplyChannel(out.clean, channel);
  out.image = ComposeThreeChannel(out.received.samples, spec.imaging.plane, spec.imaging.channels, &out.dropped);
  return out;
}

GenerationSummary GenerateDataset(const DatasetSpec& spec) {
  spec.Validate();

  struct Job {
    ModulationScheme scheme;
    double snr_db;
    std::uint64_t index;
  };
  std::vector<Job> jobs;
  for (ModulationScheme scheme : spec.schemes) {
    for (double snr : spec.snr_grid_db) {
      for (int i = 0; i < spec.per_class_per_snr; ++i) jobs.push_back({scheme, snr, static_cast<std::uint64_t>(i)});
    }
  }

  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + spec.output_dir.string() + ": " + ec.message());
  for (ModulationScheme scheme : spec.schemes) {
    for (double snr : spec.snr_grid_db) {
      fs::create_directories(spec.output_dir / SchemeName(scheme) / FormatSnr(snr), ec);
      if (ec) throw Error(ErrorCode::kIoError, "cannot create image directory: " + ec.message());
    }
  }

  GenerationSummary summary;
  summary.manifest.resize(jobs.size());
  std::vector<std::size_t> dropped(jobs.size(), 0);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        const std::uint64_t seed = DeriveFrameSeed(spec.master_seed, job.scheme, job.snr_db, job.index);
        const SynthesizedFrame frame = SynthesizeFrame(spec, job.scheme, job.snr_db, seed);
        const std::string rel = EntryPath(job.scheme, job.snr_db, job.index);
        WritePng(spec.output_dir / rel, frame.image);
        summary.manifest[i] = ManifestEntry{rel, SchemeLabel(job.scheme), std::string(SchemeName(job.scheme)),
                                            job.snr_db, seed};
        dropped[i] = frame.dropped;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(jobs.size());
        return;
      }
    }
  };

  const int workers = std::min<int>(ResolveJobs(spec.jobs), static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t i = 0; i < jobs.size(); ++i) {
    summary.counts[{SchemeLabel(jobs[i].scheme), SnrMillibels(jobs[i].snr_db)}] += 1;
    summary.dropped_samples += dropped[i];
  }
  summary.manifest_path = spec.output_dir / kManifestFileName;
  WriteManifest(summary.manifest, summary.manifest_path);
  return summary;
}

void WriteManifest(const Manifest& entries, const fs::path& path) {
  std::ostringstream text;
  for (const ManifestEntry& e : entries) {
    nlohmann::ordered_json record;
    record["path"] = e.path;
    record["label"] = e.label;
    record["scheme"] = e.scheme;
    record["snr_db"] = e.snr_db;
    record["frame_seed"] = e.frame_seed;
    text << record.dump() << '\n';
  }
  const std::string bytes = text.str();
  WriteFileBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

Manifest LoadManifest(const fs::path& path, bool verify_files) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest " + path.string());
  Manifest entries;
  std::string line;
  std::size_t line_no = 0;
  const fs::path root = path.parent_path();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      Malformed(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) Malformed(line_no, "record is not an object");
    static const std::set<std::string> kFields = {"path", "label", "scheme", "snr_db", "frame_seed"};
    for (const auto& [key, value] : record.items()) {
      if (!kFields.contains(key)) Malformed(line_no, "unknown field '" + key + "'");
    }
    for (const auto& key : kFields) {
      if (!record.contains(key)) Malformed(line_no, "missing field '" + key + "'");
    }
    if (!record["path"].is_string()) Malformed(line_no, "path must be a string");
    if (!record["label"].is_number_integer()) Malformed(line_no, "label must be an integer");
    if (!record["scheme"].is_string()) Malformed(line_no, "scheme must be a string");
    if (!record["snr_db"].is_number()) Malformed(line_no, "snr_db must be a number");
    if (!record["frame_seed"].is_number_unsigned()) Malformed(line_no, "frame_seed must be an unsigned integer");

    ManifestEntry e;
    e.path = record["path"].get<std::string>();
    const auto label = record["label"].get<std::int64_t>();
    if (label < 0 || label >= kNumSchemes) Malformed(line_no, "label " + std::to_string(label) + " out of range");
    e.label = static_cast<int>(label);
    e.scheme = record["scheme"].get<std::string>();
    if (SchemeName(SchemeFromLabel(e.label)) != e.scheme) {
      Malformed(line_no, "scheme '" + e.scheme + "' does not match label " + std::to_string(e.label));
    }
    e.snr_db = record["snr_db"].get<double>();
    e.frame_seed = record["frame_seed"].get<std::uint64_t>();
    if (e.path.empty()) Malformed(line_no, "empty path");
    if (verify_files && !fs::exists(root / e.path)) {
      throw Error(ErrorCode::kIoError, "line " + std::to_string(line_no) + ": missing image " + (root / e.path).string());
    }
    entries.push_back(std::move(e));
  }
  if (in.bad()) throw Error(ErrorCode::kIoError, "read failed for " + path.string());
  return entries;
}

std::string_view SplitRoleName(SplitRole role) {
  switch (role) {
    case SplitRole::kBaseTrain: return "BASE_TRAIN";
    case SplitRole::kValidation: return "VALIDATION";
    case SplitRole::kTestIn: return "TEST_IN";
    case SplitRole::kTestOut: return "TEST_OUT";
    case SplitRole::kFinetuneTrain: return "FINETUNE_TRAIN";
  }
  return "?";
}

SplitRole ParseSplitRole(std::string_view name) {
  for (SplitRole r : {SplitRole::kBaseTrain, SplitRole::kValidation, SplitRole::kTestIn, SplitRole::kTestOut,
                      SplitRole::kFinetuneTrain}) {
    if (SplitRoleName(r) == name) return r;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown split role '" + std::string(name) + "'");
}

Manifest MakeSplit(const Manifest& manifest, const SplitSpec& split, std::uint64_t seed,
                   const std::set<std::string>& exclude) {
  if (split.per_class <= 0) throw Error(ErrorCode::kInvalidSpec, "split per_class must be positive");
  if (split.snrs_db.empty()) throw Error(ErrorCode::kInvalidSpec, "split needs at least one SNR");

  std::set<int> labels;
  for (const auto& e : manifest) labels.insert(e.label);

  Manifest out;
  for (int label : labels) {
    for (double snr : split.snrs_db) {
      const std::int64_t mb = SnrMillibels(snr);
      std::vector<std::size_t> candidates;
      for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& e = manifest[i];
        if (e.label == label && SnrMillibels(e.snr_db) == mb && !exclude.contains(e.path)) candidates.push_back(i);
      }
      if (candidates.size() < static_cast<std::size_t>(split.per_class)) {
        throw Error(ErrorCode::kInsufficientSamples,
                    std::string(SchemeName(SchemeFromLabel(label))) + " at " + FormatSnr(snr) + " dB has " +
                        std::to_string(candidates.size()) + " available entries, " +
                        std::to_string(split.per_class) + " requested");
      }
      std::uint64_t key = HashCombine(Mix64(seed), static_cast<std::uint64_t>(split.role));
      key = HashCombine(key, static_cast<std::uint64_t>(label));
      key = HashCombine(key, static_cast<std::uint64_t>(mb));
      CounterRng rng(key);
      Shuffle(candidates.begin(), candidates.end(), rng);
      for (int k = 0; k < split.per_class; ++k) out.push_back(manifest[candidates[static_cast<std::size_t>(k)]]);
    }
  }
  return out;
}

std::vector<Manifest> DrawDisjointSplits(const Manifest& manifest, const std::vector<SplitSpec>& splits,
                                         std::uint64_t seed) {
  std::vector<Manifest> out;
  std::set<std::string> used;
  for (const SplitSpec& split : splits) {
    out.push_back(MakeSplit(manifest, split, seed, used));
    for (const auto& e : out.back()) used.insert(e.path);
  }
  return out;
}

std::uint64_t HashBytes(std::span<const std::uint8_t> bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t HashFile(const fs::path& path) { return HashBytes(ReadFileBytes(path)); }

}  // namespace amc
