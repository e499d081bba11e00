#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "ofpnet/cli.h"
#include "ofpnet/model.h"
#include "test_util.h"

namespace ofpnet::cli {
namespace {

namespace fs = std::filesystem;
using ofpnet::testing::TempDir;

int run_quiet(std::vector<std::string> args) {
  args.insert(args.begin(), "ofpnet");
  ::testing::internal::CaptureStdout();
  ::testing::internal::CaptureStderr();
  const int code = run(args);
  ::testing::internal::GetCapturedStdout();
  ::testing::internal::GetCapturedStderr();
  return code;
}

std::string run_stdout(std::vector<std::string> args, int& code) {
  args.insert(args.begin(), "ofpnet");
  ::testing::internal::CaptureStdout();
  code = run(args);
  return ::testing::internal::GetCapturedStdout();
}

const std::vector<std::string> kTiny = {
    "--set", "model.channels=4",      "--set", "model.projection_depth=1",
    "--set", "model.fusion_blocks=1", "--set", "train.total_epochs=2",
    "--set", "train.iters_per_epoch=2", "--set", "train.halve_every=1",
    "--set", "train.patch=16",        "--set", "train.batch=1",
    "--set", "train.scale=4",         "--set", "train.lr0=1e-3",
    "--set", "data.split_train=2",    "--set", "data.split_val=0",
    "--set", "data.split_test=1"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTiny.begin(), kTiny.end());
  return args;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_quiet({}), kUsage);
  EXPECT_EQ(run_quiet({"frobnicate"}), kUsage);
  EXPECT_EQ(run_quiet({"train", "--bogus"}), kUsage);
  EXPECT_EQ(run_quiet({"info"}), kUsage);
  EXPECT_EQ(run_quiet({"--help"}), kOk);
}

TEST(Cli, ConfigErrors) {
  TempDir tmp;
  const std::string out = (tmp / "o").string();
  EXPECT_EQ(run_quiet({"degrade", "--synthetic", "1", "--out", out, "--set", "model.nope=1"}),
            kConfig);
  EXPECT_EQ(run_quiet({"degrade", "--synthetic", "1", "--out", out, "--set", "model.channels=x"}),
            kConfig);
  std::ofstream(tmp / "bad.cfg") << "model.channels = 4\nthis is not a pair\n";
  EXPECT_EQ(run_quiet({"degrade", "--synthetic", "1", "--out", out, "--config",
                       (tmp / "bad.cfg").string()}),
            kConfig);
  EXPECT_EQ(run_quiet({"degrade", "--synthetic", "1", "--out", out, "--config",
                       (tmp / "missing.cfg").string()}),
            kConfig);
}

TEST(Cli, DataErrors) {
  TempDir tmp;
  EXPECT_EQ(run_quiet({"info", "--checkpoint", (tmp / "none.ckpt").string()}), kData);
  EXPECT_EQ(run_quiet(with_tiny({"train", "--data", (tmp / "nowhere").string(), "--out",
                                 (tmp / "run").string()})),
            kData);
}

TEST(Cli, DegradeTrainEvalInfoEpi) {
  TempDir tmp;
  const std::string data = (tmp / "data").string();
  ASSERT_EQ(run_quiet(with_tiny({"degrade", "--synthetic", "3", "--size", "24", "--scale", "4",
                                 "--out", data, "--seed", "5"})),
            kOk);
  EXPECT_TRUE(fs::exists(tmp / "data" / "splits.json"));
  EXPECT_TRUE(fs::exists(tmp / "data" / "run_manifest.json"));

  const std::string run_dir = (tmp / "run").string();
  ASSERT_EQ(run_quiet(with_tiny({"train", "--data", data, "--out", run_dir})), kOk);
  const fs::path ckpt = tmp / "run" / "last.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  const nlohmann::json manifest = read_json(tmp / "run" / "run_manifest.json");
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["config"]["model.channels"], "4");
  EXPECT_FALSE(manifest["artifacts"].empty());

  const std::string ev = (tmp / "eval").string();
  EXPECT_EQ(run_quiet(with_tiny({"eval", "--data", data, "--checkpoint", ckpt.string(),
                                 "--baseline", "--label", "tiny", "--out", ev})),
            kOk);
  EXPECT_TRUE(fs::exists(tmp / "eval" / "report_tiny.csv"));
  EXPECT_TRUE(fs::exists(tmp / "eval" / "report_identity.csv"));
  EXPECT_TRUE(fs::exists(tmp / "eval" / "table1.csv"));

  int code = -1;
  const std::string info = run_stdout({"info", "--checkpoint", ckpt.string()}, code);
  EXPECT_EQ(code, kOk);
  const nlohmann::json j = nlohmann::json::parse(info);
  ModelConfig tiny;
  tiny.channels = 4;
  tiny.projection_depth = 1;
  tiny.fusion_blocks = 1;
  EXPECT_EQ(j["count_params"].get<std::size_t>(), count_params(tiny));
  EXPECT_EQ(j["stored_params"], j["count_params"]);

  const nlohmann::json scenes = read_json(tmp / "data" / "splits.json")["test"];
  ASSERT_EQ(scenes.size(), 1u);
  const std::string gt = (tmp / "data" / scenes[0].get<std::string>() / "gt").string();
  EXPECT_EQ(run_quiet({"epi", "--lf", gt, "--rows", "2:3,0:10", "--orientation", "v", "--out",
                       (tmp / "epi").string()}),
            kOk);
  EXPECT_EQ(run_quiet({"epi", "--lf", gt, "--rows", "2:3", "--orientation", "x", "--out",
                       (tmp / "epi").string()}),
            kUsage);

  EXPECT_EQ(run_quiet(with_tiny({"train", "--data", data, "--out", run_dir, "--set",
                                 "train.phase=finetune"})),
            kConfig);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = OFPNET_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status("frobnicate"), 2);
  EXPECT_EQ(status("info --checkpoint /nonexistent.ckpt"), 5);
}

}  // namespace
}  // namespace ofpnet::cli
