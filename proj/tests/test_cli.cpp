#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "beamkit/scene_io.hpp"
#include "beamkit/tensor_dump.hpp"
#include "support.hpp"

namespace beamkit {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int status = -1;
  std::string output;  // stdout and stderr together
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(BEAMKIT_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.output.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// One-second clips keep every command quick.
const std::string kShort = "--set simulation.clip_seconds=1.0 ";

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli("").status, 1);
  EXPECT_EQ(cli("transmogrify").status, 1);
  EXPECT_EQ(cli("simulate --count 0").status, 1);
  EXPECT_EQ(cli("oracle-extract").status, 1);
  EXPECT_EQ(cli("--steering sideways simulate").status, 1);
  EXPECT_EQ(cli("--help").status, 0);
}

TEST(Cli, InvalidConfigListsEveryProblem) {
  testing::TempDir dir("cli");
  const CliRun r = cli("--set loading=-1 --set train_scenes=0 simulate --out " + q(dir / "out"));
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("loading"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("train_scenes"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir / "out"));

  std::ofstream(dir / "bad.json") << R"({"seed": 1, "colour": "blue"})";
  const CliRun u = cli("--config " + q(dir / "bad.json") + " simulate --out " + q(dir / "out"));
  EXPECT_EQ(u.status, 1);
  EXPECT_NE(u.output.find("colour"), std::string::npos) << u.output;
  EXPECT_EQ(cli("--set nosuch.key=1 simulate").status, 1);
}

TEST(Cli, SimulateIsDeterministicPerSeed) {
  testing::TempDir dir("cli");
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(cli(kShort + "--seed 9 simulate --count 2 --out " + q(dir / run)).status, 0);
  }
  ASSERT_EQ(cli(kShort + "--seed 10 simulate --count 1 --out " + q(dir / "c")).status, 0);
  for (const char* f : {"mixture.wav", "target.wav", "interference.wav", "noise.wav", "manifest.json"}) {
    for (const char* scene : {"scene_000", "scene_001"}) {
      const auto a = slurp(dir.path() / "a" / scene / f);
      EXPECT_FALSE(a.empty());
      EXPECT_EQ(a, slurp(dir.path() / "b" / scene / f)) << scene << "/" << f;
    }
  }
  EXPECT_NE(slurp(dir.path() / "a" / "scene_000" / "mixture.wav"),
            slurp(dir.path() / "c" / "scene_000" / "mixture.wav"));
  EXPECT_EQ(read_manifest(dir.path() / "a" / "scene_001").seed, 10u);
}

TEST(Cli, ConfigFileAndSeedFlag) {
  testing::TempDir dir("cli");
  std::ofstream(dir / "cfg.json") << R"({"seed": 4, "simulation": {"clip_seconds": 1.0}})";
  ASSERT_EQ(cli("--config " + q(dir / "cfg.json") + " simulate --out " + q(dir / "a")).status, 0);
  EXPECT_EQ(read_manifest(dir.path() / "a" / "scene_000").seed, 4u);
  ASSERT_EQ(cli("--config " + q(dir / "cfg.json") + " --seed 6 simulate --out " + q(dir / "b")).status, 0);
  EXPECT_EQ(read_manifest(dir.path() / "b" / "scene_000").seed, 6u);
}

TEST(Cli, EvaluateMixtureAtLowSirIsNegative) {
  testing::TempDir dir("cli");
  ASSERT_EQ(cli(kShort + "--set 'simulation.sir_db=[-6,-5]' simulate --count 2 --out " + q(dir / "s")).status, 0);
  const CliRun r = cli("evaluate --input mixture " + q(dir / "s" / "scene_000") + " " + q(dir / "s" / "scene_001") +
                    " --out " + q(dir / "eval"));
  ASSERT_EQ(r.status, 0) << r.output;
  std::ifstream in(dir.path() / "eval" / "metrics.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "id,si_sdr_db,stoi");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string id, sdr;
    std::getline(ss, id, ',');
    std::getline(ss, sdr, ',');
    EXPECT_LT(std::stod(sdr), 0.0) << line;
  }
  EXPECT_EQ(rows, 2);
  std::ifstream js(dir.path() / "eval" / "metrics.json");
  EXPECT_EQ(nlohmann::json::parse(js).at("count").get<int>(), 2);
}

TEST(Cli, OracleExtractThenEvaluate) {
  testing::TempDir dir("cli");
  ASSERT_EQ(cli(kShort + "simulate --count 1 --out " + q(dir / "s")).status, 0);
  const CliRun r = cli(kShort + "--mask crm --steering pca oracle-extract --dump-features " +
                       q(dir / "s" / "scene_000") + " --out " + q(dir / "x"));
  ASSERT_EQ(r.status, 0) << r.output;
  const TensorDump features = read_tensor_dump(dir.path() / "x" / "scene_000" / "features.bin");
  ASSERT_EQ(features.shape.size(), 3u);
  EXPECT_EQ(features.shape[0], 5);
  EXPECT_EQ(features.shape[1], 257);
  EXPECT_EQ(features.names.size(), 5u);
  EXPECT_EQ(features.values.size(), static_cast<std::size_t>(5 * 257 * features.shape[2]));
  EXPECT_NE(r.output.find("features.bin"), std::string::npos);
  std::ifstream in(dir.path() / "x" / "scene_000" / "extraction.json");
  const auto doc = nlohmann::json::parse(in);
  EXPECT_EQ(doc.at("mask"), "crm");
  EXPECT_EQ(doc.at("steering"), "pca");
  EXPECT_EQ(cli("evaluate " + q(dir / "x" / "scene_000") + " --out " + q(dir / "e")).status, 0);
  EXPECT_TRUE(fs::exists(dir.path() / "e" / "metrics.json"));
}

TEST(Cli, RuntimeFailureExitsWithTwoAndCleansUp) {
  testing::TempDir dir("cli");
  ASSERT_EQ(cli(kShort + "simulate --count 1 --out " + q(dir / "s")).status, 0);
  fs::create_directories(dir.path() / "empty");
  // The first scene is written before the second one fails to load.
  const CliRun r = cli(kShort + "oracle-extract " + q(dir / "s" / "scene_000") + " " + q(dir / "empty") +
                    " --out " + q(dir / "x" / "nested"));
  EXPECT_EQ(r.status, 2) << r.output;
  EXPECT_NE(r.output.find("error:"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir.path() / "x"));
  EXPECT_TRUE(fs::exists(dir.path() / "s" / "scene_000" / "manifest.json"));

  // Output directories that already existed survive a failed run.
  fs::create_directories(dir.path() / "keep");
  EXPECT_EQ(cli("evaluate " + q(dir / "empty") + " --out " + q(dir / "keep")).status, 2);
  EXPECT_TRUE(fs::exists(dir.path() / "keep"));
  EXPECT_TRUE(fs::is_empty(dir.path() / "keep"));
}

TEST(Cli, TrainInferBeampattern) {
  testing::TempDir dir("cli");
  const std::string tiny = "--set train.steps=3 --set train.smoothing=2 --set train_scenes=1 "
                           "--set train_clip_seconds=0.5 ";
  const CliRun t = cli(tiny + "train --out " + q(dir / "t"));
  ASSERT_EQ(t.status, 0) << t.output;
  for (const char* f : {"checkpoint.bin", "loss_trace.csv", "train_config.json", "train_summary.json"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "t" / f)) << f;
  }
  std::ifstream trace(dir.path() / "t" / "loss_trace.csv");
  std::string line;
  std::getline(trace, line);
  EXPECT_EQ(line, "step,epoch,example,loss,si_sdr_db,mse,learning_rate,grad_norm");
  int rows = 0;
  while (std::getline(trace, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(slurp(dir.path() / "t" / "checkpoint.bin").substr(0, 6), "BKCKPT");

  ASSERT_EQ(cli(kShort + "simulate --count 1 --out " + q(dir / "s")).status, 0);
  const std::string ck = "--checkpoint " + q(dir / "t" / "checkpoint.bin") + " ";
  const CliRun i = cli("infer " + ck + q(dir / "s" / "scene_000") + " --out " + q(dir / "i"));
  ASSERT_EQ(i.status, 0) << i.output;
  EXPECT_TRUE(fs::exists(dir.path() / "i" / "scene_000" / "estimate.wav"));
  EXPECT_EQ(cli("evaluate " + q(dir / "i" / "scene_000") + " --out " + q(dir / "e")).status, 0);

  const CliRun b = cli("beampattern " + ck + q(dir / "s" / "scene_000") + " --out " + q(dir / "b"));
  ASSERT_EQ(b.status, 0) << b.output;
  std::ifstream csv(dir.path() / "b" / "scene_000_beampattern.csv");
  std::getline(csv, line);
  EXPECT_EQ(line.substr(0, 6), "0,1,2,");
  rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);

  EXPECT_EQ(cli("infer --checkpoint " + q(dir / "missing.bin") + " " + q(dir / "s")).status, 1);
}

}  // namespace
}  // namespace beamkit
