#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nifm/cli.hpp"
#include "nifm/dataset.hpp"

using namespace nifm;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nifm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<std::string> kTinyModel{"--set", "image_size=32", "--set", "model.stage_channels=[4,6,8,8,10]",
                                          "--set", "model.decoder_width=4"};

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "nifm_test_cli";
    fs::remove_all(root_);
    fs::create_directories(root_);
    const CliRun r = cli({"generate-data", "--out", (root_ / "data").string(), "--seed", "5", "--set",
                       "train_counts=[1,1,1,1,1,1,1,1,1]", "--set", "test_counts=[1,1,1,1,1,1,1,1,1]", "--set",
                       "image_size=32"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static fs::path root_;
};

fs::path CliTest::root_;

}  // namespace

TEST(CliHelp, EnumeratesFlagsWithDefaults) {
  const CliRun top = cli({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"generate-data", "train", "eval", "count-ops", "export-features", "experiment"})
    EXPECT_NE(top.out.find(sub), std::string::npos) << sub;

  const CliRun ev = cli({"eval", "--help"});
  EXPECT_EQ(ev.code, 0);
  for (const char* flag : {"--ckpt", "--data", "--indicator-mode TEXT [correct]", "--indicator-seed UINT [0]",
                           "--split TEXT [test]", "--image-size UINT [64]", "--out"})
    EXPECT_NE(ev.out.find(flag), std::string::npos) << flag;

  const CliRun co = cli({"count-ops", "--help"});
  EXPECT_NE(co.out.find("--resolution UINT [384]"), std::string::npos);
  EXPECT_NE(co.out.find("--runs UINT [20]"), std::string::npos);
  const CliRun tr = cli({"train", "--help"});
  EXPECT_NE(tr.out.find("--split TEXT [train]"), std::string::npos);
}

TEST(CliErrors, OneMachineParsableLine) {
  const CliRun none = cli({});
  EXPECT_NE(none.code, 0);
  EXPECT_EQ(none.err.rfind("error: usage: ", 0), 0u);

  const CliRun missing = cli({"eval", "--ckpt", "/nonexistent/model.json", "--data", "/nonexistent", "--out", "x"});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("error: io: ", 0), 0u);
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n'), 1);

  const CliRun bad_key = cli({"count-ops", "--runs", "0", "--set", "adam.momentum=0.5"});
  EXPECT_EQ(bad_key.code, 1);
  EXPECT_EQ(bad_key.err.rfind("error: config: ", 0), 0u);

  const CliRun bad_mode = cli({"eval", "--ckpt", "a.json", "--data", "d", "--out", "o", "--indicator-mode", "fixed:Hail"});
  EXPECT_EQ(bad_mode.err.rfind("error: config: ", 0), 0u);
}

TEST_F(CliTest, ConfigEchoedBeforeRunning) {
  const auto cfg = root_ / "train.json";
  std::ofstream(cfg) << R"({"epochs": 1, "batch_size": 3})";
  std::vector<std::string> args{"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--out",
                                (root_ / "ck" / "m.json").string()};
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  const CliRun r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("{\n  \"command\": \"train\"", 0), 0u);
  EXPECT_NE(r.out.find("\"batch_size\": 3"), std::string::npos);
  EXPECT_TRUE(fs::exists(root_ / "ck" / "m.bin"));
  EXPECT_TRUE(fs::exists(root_ / "ck" / "m_loss.csv"));

  std::ofstream(cfg) << R"({"epochs": 1, "learning_rate": 3})";
  const CliRun bad = cli({"train", "--config", cfg.string(), "--data", (root_ / "data").string(), "--out",
                       (root_ / "ck" / "n.json").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("learning_rate"), std::string::npos);
}

TEST_F(CliTest, EmptyManifestIsAnErrorAndWritesNothing) {
  const auto empty = root_ / "empty";
  fs::create_directories(empty);
  DatasetManifest m;
  m.root = empty;
  save_manifest(m, empty / "manifest.json");

  std::vector<std::string> args{"train", "--data", (root_ / "data").string(), "--out",
                                (root_ / "ck2" / "m.json").string(), "--set", "epochs=1"};
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  ASSERT_EQ(cli(args).code, 0);

  const auto out = root_ / "eval_empty";
  const CliRun r = cli({"eval", "--ckpt", (root_ / "ck2" / "m.json").string(), "--data", empty.string(), "--out",
                     out.string(), "--image-size", "32"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: data: ", 0), 0u);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, DisabledCheckpointIgnoresIndicatorMode) {
  std::vector<std::string> args{"train", "--data", (root_ / "data").string(), "--out",
                                (root_ / "ck3" / "m.json").string(), "--set", "epochs=1", "--set",
                                "model.nifm_variant=disabled"};
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  ASSERT_EQ(cli(args).code, 0);

  std::vector<std::string> csvs;
  for (const std::string mode : {"correct", "shuffled", "fixed:Dark"}) {
    const auto out = root_ / ("eval_" + std::to_string(csvs.size()));
    const CliRun r = cli({"eval", "--ckpt", (root_ / "ck3" / "m.json").string(), "--data", (root_ / "data").string(),
                       "--out", out.string(), "--image-size", "32", "--indicator-mode", mode, "--indicator-seed",
                       "4"});
    ASSERT_EQ(r.code, 0) << r.err;
    csvs.push_back(slurp(out / "metrics.csv") + slurp(out / "pr_curve.csv") + slurp(out / "f_curve.csv"));
  }
  EXPECT_EQ(csvs[0], csvs[1]);
  EXPECT_EQ(csvs[0], csvs[2]);
  EXPECT_EQ(csvs[0].rfind("image,mae,s_measure,", 0), 0u);
}

TEST_F(CliTest, ExportFeaturesAndCountOps) {
  std::vector<std::string> args{"train", "--data", (root_ / "data").string(), "--out",
                                (root_ / "ck4" / "m.json").string(), "--set", "epochs=1"};
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  ASSERT_EQ(cli(args).code, 0);
  const auto csv = root_ / "feats" / "f.csv";
  const CliRun r = cli({"export-features", "--ckpt", (root_ / "ck4" / "m.json").string(), "--data",
                     (root_ / "data").string(), "--stage", "3", "--image-size", "32", "--split", "all", "--out",
                     csv.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"silhouette\""), std::string::npos);
  EXPECT_EQ(slurp(csv).rfind("id,label,class,f0,", 0), 0u);

  const CliRun ops = cli({"count-ops", "--resolution", "64", "--runs", "0", "--set", "model.stage_channels=[1,1,1,1,1]",
                       "--set", "model.nifm_variant=disabled"});
  ASSERT_EQ(ops.code, 0) << ops.err;
  EXPECT_NE(ops.out.find("\"params\""), std::string::npos);
}
