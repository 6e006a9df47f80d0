#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "test_util.hpp"

#include "amc/dataset.hpp"

namespace fs = std::filesystem;
using amc::testing::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult Run(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" AMC_CLI_PATH "' " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string HashLine(const std::string& output) {
  const auto pos = output.find("manifest hash:");
  return pos == std::string::npos ? "" : output.substr(pos, output.find('\n', pos) - pos);
}

const char* kGenerate = "generate --schemes OOK,GMSK --snrs 0,10 --per-class 5 --symbols 128";

const char* kSmallConfig = R"({
  "training": {"batch_size": 4},
  "splits": [
    {"name": "val", "role": "VALIDATION", "snrs_db": [0], "per_class": 1},
    {"name": "train", "role": "BASE_TRAIN", "snrs_db": [0, 10], "per_class": 2},
    {"name": "test", "role": "TEST_IN", "snrs_db": [10], "per_class": 1}
  ]
})";

}  // namespace

TEST_CASE("usage errors exit 1 and help shows defaults") {
  TempDir dir("cli_usage");
  CHECK(Run(dir.path(), "").exit_code == 1);
  CHECK(Run(dir.path(), "generate --per-class notanumber").exit_code == 1);
  CHECK(Run(dir.path(), "render").exit_code == 1);
  const RunResult help = Run(dir.path(), "generate --help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("[100]") != std::string::npos);
  CHECK(help.output.find("[2.5]") != std::string::npos);
}

TEST_CASE("generate writes the requested grid with a stable hash") {
  TempDir dir("cli_gen");
  const RunResult a = Run(dir.path(), std::string(kGenerate) + " -o a -j 1");
  REQUIRE(a.exit_code == 0);
  const auto manifest = amc::LoadManifest(dir.path() / "a" / amc::kManifestFileName, true);
  CHECK(manifest.size() == 20);
  CHECK_FALSE(HashLine(a.output).empty());

  const RunResult b = Run(dir.path(), std::string(kGenerate) + " -o b -j 2");
  REQUIRE(b.exit_code == 0);
  CHECK(HashLine(a.output) == HashLine(b.output));
  CHECK(Slurp(dir.path() / "a" / amc::kManifestFileName) == Slurp(dir.path() / "b" / amc::kManifestFileName));

  const RunResult c = Run(dir.path(), std::string(kGenerate) + " -o c --seed 1");
  CHECK(HashLine(c.output) != HashLine(a.output));
}

TEST_CASE("output root applies to relative paths") {
  TempDir dir("cli_root");
  fs::create_directories(dir.path() / "root");
  const RunResult r =
      Run(dir.path(), "render --scheme OOK -o pics --zoom 1 --snr 5 && AMC_OUTPUT_ROOT=root '" AMC_CLI_PATH
                      "' render --scheme OOK -o pics --zoom 1 --snr 5");
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir.path() / "pics" / "OOK_5dB_rgb.png"));
  CHECK(fs::exists(dir.path() / "root" / "pics" / "OOK_5dB_rgb.png"));
}

TEST_CASE("render is deterministic and rejects unknown schemes") {
  TempDir dir("cli_render");
  const RunResult bad = Run(dir.path(), "render --scheme BOGUS");
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("BOGUS") != std::string::npos);

  REQUIRE(Run(dir.path(), "render --scheme GMSK -o r1").exit_code == 0);
  REQUIRE(Run(dir.path(), "render --scheme GMSK -o r2").exit_code == 0);
  for (const char* kind : {"gray", "enhanced", "rgb", "panel"}) {
    const std::string file = std::string("GMSK_10dB_") + kind + ".png";
    REQUIRE(fs::exists(dir.path() / "r1" / file));
    CHECK(Slurp(dir.path() / "r1" / file) == Slurp(dir.path() / "r2" / file));
  }
}

TEST_CASE("train, eval and a mismatched model config") {
  TempDir dir("cli_train");
  std::ofstream(dir.path() / "small.json") << kSmallConfig;
  REQUIRE(Run(dir.path(), std::string(kGenerate) + " -o data").exit_code == 0);

  const RunResult t = Run(dir.path(), "train -c small.json --epochs 0 -o ck/base.ckpt");
  INFO(t.output);
  REQUIRE(t.exit_code == 0);
  CHECK(fs::exists(dir.path() / "ck" / "base.ckpt"));

  const RunResult t1 = Run(dir.path(), "train -c small.json --epochs 1 -o ck/one.ckpt");
  INFO(t1.output);
  REQUIRE(t1.exit_code == 0);
  CHECK(fs::exists(dir.path() / "ck" / "one.ckpt.log.csv"));

  const RunResult e = Run(dir.path(), "eval -c small.json --checkpoint ck/one.ckpt -o ev");
  INFO(e.output);
  REQUIRE(e.exit_code == 0);
  CHECK(fs::exists(dir.path() / "ev" / "report.json"));
  CHECK(fs::exists(dir.path() / "ev" / "overall_confusion.csv"));
  CHECK(e.output.find("test") != std::string::npos);

  std::ofstream(dir.path() / "tiny.json") << R"({"model": {"preset": "tiny"}})";
  const RunResult m = Run(dir.path(), "eval -c tiny.json --checkpoint ck/one.ckpt -o ev2");
  CHECK(m.exit_code == 2);
  CHECK(m.output.find("ShapeError") != std::string::npos);

  const RunResult missing = Run(dir.path(), "eval --checkpoint nope.ckpt");
  CHECK(missing.exit_code == 2);
}

TEST_CASE("dump-config prints parseable JSON") {
  TempDir dir("cli_dump");
  const RunResult r = Run(dir.path(), "--dump-config");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("\"splits\"") != std::string::npos);
  std::ofstream(dir.path() / "bad.json") << R"({"dataset": {"bogus": 1}})";
  const RunResult bad = Run(dir.path(), "--dump-config --config-file bad.json");
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("dataset.bogus") != std::string::npos);
}
