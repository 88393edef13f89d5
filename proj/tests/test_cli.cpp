#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vwg/tensor.hpp"

#ifndef VWG_CLI_PATH
#error "VWG_CLI_PATH must be defined"
#endif

namespace {

namespace fs = std::filesystem;

struct CliDir {
  fs::path root;
  CliDir() {
    root = fs::temp_directory_path() / ("vwg_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(root);
  }
  ~CliDir() { fs::remove_all(root); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string p(const std::string& name) const { return (root / name).string(); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VWG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

TEST(Cli, SynthWritesTriplesAndManifest) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("ds") + " --num 8 --variant visual --seed 7"), 0);
  int ppm = 0, ocr = 0, ann = 0;
  for (const auto& e : fs::directory_iterator(dir.p("ds"))) {
    const std::string name = e.path().filename().string();
    ppm += name.ends_with(".ppm");
    ocr += name.ends_with(".ocr.json");
    ann += name.ends_with(".ann.json");
  }
  EXPECT_EQ(ppm, 8);
  EXPECT_EQ(ocr, 8);
  EXPECT_EQ(ann, 8);
  EXPECT_TRUE(fs::exists(dir.p("ds") + "/manifest.json"));
  EXPECT_TRUE(fs::exists(dir.p("ds") + ".run.json"));
}

TEST(Cli, SynthRerunIsByteIdentical) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("a") + " --num 4 --variant text --seed 3"), 0);
  ASSERT_EQ(run_cli("synth --out " + dir.p("b") + " --num 4 --variant text --seed 3"), 0);
  for (const auto& e : fs::directory_iterator(dir.p("a"))) {
    const fs::path other = fs::path(dir.p("b")) / e.path().filename();
    ASSERT_TRUE(fs::exists(other));
    ASSERT_EQ(slurp(e.path()), slurp(other)) << e.path();
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  CliDir dir;
  EXPECT_EQ(run_cli("synth --out " + dir.p("x") + " --num 0"), 2);
  EXPECT_EQ(run_cli("synth --out " + dir.p("x") + " --bogus-flag 1"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, EncodeShapesPerEncoder) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("ds") + " --num 2 --variant visual --seed 1"), 0);
  const std::string manifest = dir.p("ds") + "/manifest.json";

  ASSERT_EQ(run_cli("encode --dataset " + manifest + " --encoder vwg-pad --grid 32x32 --dim 32 --out " +
                    dir.p("pad")),
            0);
  const vwg::Tensor pad = vwg::read_tensor(dir.p("pad") + "/doc-00000.vwg-pad.vwgt");
  EXPECT_EQ(pad.channels, 35);
  EXPECT_EQ(pad.rows, 32);

  ASSERT_EQ(run_cli("encode --dataset " + manifest + " --encoder layout --grid 32x32 --dim 8 --out " +
                    dir.p("layout")),
            0);
  const vwg::Tensor layout = vwg::read_tensor(dir.p("layout") + "/doc-00000.layout.vwgt");
  EXPECT_EQ(layout.channels, 3);
  for (float v : layout.v) ASSERT_TRUE(v == 0.0f || v == 1.0f);

  ASSERT_EQ(run_cli("encode --dataset " + manifest + " --encoder vwg-2enc --grid 32x32 --dim 8 --out " +
                    dir.p("two")),
            0);
  EXPECT_TRUE(fs::exists(dir.p("two") + "/doc-00000.vwg-2enc.vwgt"));
  EXPECT_TRUE(fs::exists(dir.p("two") + "/doc-00000.image.vwgt"));
  EXPECT_TRUE(fs::exists(dir.p("two") + "/doc-00000.mask.vwgt"));
}

TEST(Cli, TrainPredictEvaluatePipeline) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("ds") + " --num 10 --variant visual --seed 11 "
                    "--width 256 --height 256"),
            0);
  const std::string manifest = dir.p("ds") + "/manifest.json";
  const std::string train_flags = "train --dataset " + manifest +
                                  " --encoder vwg-pad --grid 32x32 --dim 8 --epochs 6 --batch-size 4 "
                                  "--base 4 --depth 2 --seed 5 --out " +
                                  dir.p("model.vwgm");
  ASSERT_EQ(run_cli(train_flags), 0);
  ASSERT_TRUE(fs::exists(dir.p("model.vwgm")));
  ASSERT_TRUE(fs::exists(dir.p("model.vwgm.history.json")));

  const auto history = nlohmann::json::parse(slurp(dir.p("model.vwgm.history.json")));
  EXPECT_EQ(history.size(), 6u);
  for (std::size_t i = 0; i < history.size(); ++i) EXPECT_EQ(history[i]["epoch"], i + 1);

  // identical flags reproduce the identical history
  const std::string hist_a = slurp(dir.p("model.vwgm.history.json"));
  ASSERT_EQ(run_cli(train_flags), 0);
  EXPECT_EQ(slurp(dir.p("model.vwgm.history.json")), hist_a);

  ASSERT_EQ(run_cli("predict --ckpt " + dir.p("model.vwgm") + " --dataset " + manifest + " --out " +
                    dir.p("preds")),
            0);
  int pred_files = 0;
  for (const auto& e : fs::directory_iterator(dir.p("preds")))
    pred_files += e.path().filename().string().ends_with(".pred.json");
  EXPECT_EQ(pred_files, 10);

  ASSERT_EQ(run_cli("evaluate --pred " + dir.p("preds") + " --dataset " + manifest + " --out " +
                    dir.p("report.json")),
            0);
  const auto report = nlohmann::json::parse(slurp(dir.p("report.json")));
  EXPECT_TRUE(report.contains("dataset"));
  EXPECT_TRUE(report["dataset"].contains("war"));
  EXPECT_EQ(report["per_doc"].size(), 10u);
}

TEST(Cli, EvaluateMissingPredictionFails) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("ds") + " --num 3 --variant visual --seed 2"), 0);
  fs::create_directories(dir.p("empty_preds"));
  EXPECT_EQ(run_cli("evaluate --pred " + dir.p("empty_preds") + " --dataset " + dir.p("ds") +
                    "/manifest.json --out " + dir.p("r.json")),
            1);
}

TEST(Cli, KfoldEmitsAblationTable) {
  CliDir dir;
  ASSERT_EQ(run_cli("synth --out " + dir.p("ds") + " --num 12 --variant visual --seed 4 "
                    "--width 256 --height 256"),
            0);
  ASSERT_EQ(run_cli("kfold --dataset " + dir.p("ds") + "/manifest.json --encoders layout,vwg-pad "
                    "--k 2 --seeds 1 --grid 32x32 --dim 8 --epochs 2 --base 4 --depth 2 "
                    "--max-folds 1 --out " +
                    dir.p("ablation")),
            0);
  const auto table = nlohmann::json::parse(slurp(dir.p("ablation") + "/ablation.json"));
  ASSERT_EQ(table["rows"].size(), 2u);
  EXPECT_EQ(table["rows"][0]["approach"], "layout");
  EXPECT_EQ(table["rows"][1]["approach"], "vwg-pad");
  EXPECT_GT(table["rows"][1]["parameters"].get<std::int64_t>(),
            table["rows"][0]["parameters"].get<std::int64_t>());
}

}  // namespace
