#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dexined/cli.hpp"

using namespace dexined;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun dexined_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dexined");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dexined_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  const auto b = read_bytes(p);
  return std::string(b.begin(), b.end());
}

// Small toy set on disk: `count` pairs at extent x extent.
fs::path toy_set(const fs::path& dir, std::size_t count, std::size_t extent) {
  const CliRun r = dexined_cli({"toy-data", "--out", dir.string(), "--set", "toy.count=" + std::to_string(count),
                             "--set", "toy.height=" + std::to_string(extent), "--set",
                             "toy.width=" + std::to_string(extent)});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "pairs.lst";
}

const std::vector<std::string> kTiny = {"--set", "model.width_multiplier=0.125", "--set", "train.lr_drop_epochs=[]",
                                        "--set", "train.batch_size=2", "--workers", "1"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(Cli, ParseErrorsAndUnknownKeysExitTwo) {
  EXPECT_EQ(dexined_cli({}).code, 2);
  EXPECT_EQ(dexined_cli({"frobnicate"}).code, 2);
  const fs::path dir = scratch_dir("config");
  const CliRun r = dexined_cli({"toy-data", "--out", dir.string(), "--set", "toy.colour=3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("toy.colour"), std::string::npos) << r.err;
  std::ofstream(dir / "bad.json") << R"({"train": {"lr": 1e-4, "momentum": 0.9}})";
  EXPECT_EQ(dexined_cli({"toy-data", "--out", dir.string(), "--config", (dir / "bad.json").string()}).code, 2);
}

TEST(Cli, OverridesWinOverConfigFile) {
  const fs::path dir = scratch_dir("override");
  std::ofstream(dir / "c.json") << R"({"toy": {"count": 3, "height": 32, "width": 32}})";
  ASSERT_EQ(dexined_cli({"toy-data", "--out", dir.string(), "--config", (dir / "c.json").string(), "--set",
                         "toy.count=2"})
                .code,
            0);
  EXPECT_EQ(read_json(dir / "manifest.json")["ids"].size(), 2u);
}

TEST(Cli, AugmentLiteralPresetEmits192AndIsDeterministic) {
  const fs::path dir = scratch_dir("augment");
  const fs::path list = toy_set(dir / "toy", 1, 96);
  const CliRun r = dexined_cli({"augment", "--out", (dir / "a").string(), "--list", list.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = read_json(dir / "a" / "manifest.json");
  EXPECT_EQ(m["counts"]["total"], 192);
  EXPECT_EQ(m["files"].size(), 192u);
  EXPECT_NE(m["count_note"].get<std::string>().find("288"), std::string::npos);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "images")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 192u);
  EXPECT_EQ(m["input_list"]["git_blob"], git_blob_hash(slurp(list)));

  ASSERT_EQ(dexined_cli({"augment", "--out", (dir / "b").string(), "--list", list.string()}).code, 0);
  for (const auto& f : m["files"])
    EXPECT_EQ(slurp(dir / "a" / f["image"].get<std::string>()), slurp(dir / "b" / f["image"].get<std::string>()));
  EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
  const json sample = m["files"][5];
  EXPECT_EQ(sample["image_sha1"], cli::file_sha1(dir / "a" / sample["image"].get<std::string>()));
}

TEST(Cli, AugmentEmptyListIsDataError) {
  const fs::path dir = scratch_dir("empty");
  std::ofstream(dir / "empty.lst") << "# nothing here\n";
  EXPECT_EQ(dexined_cli({"augment", "--out", (dir / "a").string(), "--list", (dir / "empty.lst").string()}).code, 3);
}

TEST(Cli, TrainWritesArtifactsAndRejectsBadLambdasUpFront) {
  const fs::path dir = scratch_dir("train");
  const fs::path list = toy_set(dir / "toy", 2, 32);
  const CliRun bad = dexined_cli(with({"train", "--out", (dir / "bad").string(), "--list", list.string(), "--set",
                                    "loss.lambdas=[1,1]"},
                                   kTiny));
  EXPECT_EQ(bad.code, 2);
  EXPECT_FALSE(fs::exists(dir / "bad" / "manifest.json"));

  const CliRun r = dexined_cli(
      with({"train", "--out", (dir / "run").string(), "--list", list.string(), "--set", "train.max_epochs=2"}, kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = read_json(dir / "run" / "manifest.json");
  EXPECT_EQ(m["status"], "complete");
  EXPECT_EQ(m["steps"], 2);
  EXPECT_EQ(m["config"]["model"]["width_multiplier"], 0.125);
  EXPECT_TRUE(fs::exists(dir / "run" / m["checkpoints"]["best"].get<std::string>()));
  EXPECT_TRUE(fs::exists(dir / "run" / "history.csv"));
}

TEST(Cli, ResumeReproducesUninterruptedRun) {
  const fs::path dir = scratch_dir("resume");
  const fs::path list = toy_set(dir / "toy", 2, 32);
  auto train = [&](const fs::path& out, int epochs, bool resume) {
    auto args = with({"train", "--out", out.string(), "--list", list.string(), "--seed", "9", "--set",
                      "train.max_epochs=" + std::to_string(epochs)},
                     kTiny);
    if (resume) args.push_back("--resume");
    return dexined_cli(args).code;
  };
  ASSERT_EQ(train(dir / "whole", 3, false), 0);
  ASSERT_EQ(train(dir / "split", 1, false), 0);
  ASSERT_EQ(train(dir / "split", 3, true), 0);
  const json a = read_checkpoint_meta(dir / "whole" / "checkpoints" / "last.ckpt");
  const json b = read_checkpoint_meta(dir / "split" / "checkpoints" / "last.ckpt");
  EXPECT_EQ(a["history"]["step_losses"], b["history"]["step_losses"]);
  EXPECT_EQ(a["step"], 3);

  DexiNedConfig mc;
  from_json_strict(a["model"], mc);
  DexiNed<float> ma(mc, 0), mb(mc, 1);
  load_checkpoint(dir / "whole" / "checkpoints" / "last.ckpt", ma);
  load_checkpoint(dir / "split" / "checkpoints" / "last.ckpt", mb);
  for (std::size_t i = 0; i < ma.store().params().size(); ++i) {
    const auto& x = ma.store().params()[i].tensor.data();
    const auto& y = mb.store().params()[i].tensor.data();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << ma.store().params()[i].name;
  }
}

TEST(Cli, DivergedTrainingExitsFour) {
  const fs::path dir = scratch_dir("diverge");
  const fs::path list = toy_set(dir / "toy", 2, 32);
  const CliRun r = dexined_cli(with({"train", "--out", (dir / "run").string(), "--list", list.string(), "--set",
                                  "train.max_epochs=6", "--set", "train.lr=1e30"},
                                 kTiny));
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_EQ(read_json(dir / "run" / "manifest.json")["status"], "failed");
}

class CliPredictEval : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch_dir("predict");
    list_ = toy_set(dir_ / "toy", 3, 40);
    const CliRun r = dexined_cli(
        with({"train", "--out", (dir_ / "run").string(), "--list", list_.string(), "--set", "train.max_epochs=1"},
             kTiny));
    ASSERT_EQ(r.code, 0) << r.err;
    ckpt_ = dir_ / "run" / "checkpoints" / "last.ckpt";
  }
  static inline fs::path dir_, list_, ckpt_;
};

TEST_F(CliPredictEval, AverageModeEqualsMeanOfPerOutputMaps) {
  const fs::path fdir = dir_ / "f", adir = dir_ / "a";
  ASSERT_EQ(dexined_cli({"predict", "--out", fdir.string(), "--checkpoint", ckpt_.string(), "--input",
                         list_.string(), "--mode", "f", "--per-output"})
                .code,
            0);
  ASSERT_EQ(dexined_cli({"predict", "--out", adir.string(), "--checkpoint", ckpt_.string(), "--input",
                         list_.string(), "--mode", "a"})
                .code,
            0);
  for (const char* name : {"toy0.png", "toy1.png", "toy2.png"}) {
    const Raster fused = read_png(fdir / name), avg = read_png(adir / name);
    EXPECT_EQ(fused.width, 40u);
    EXPECT_EQ(fused.height, 40u);
    EXPECT_EQ(fused.channels, 1u);
    EXPECT_EQ(read_png(fdir / "side7" / name), fused);
    std::vector<Raster> sides;
    for (int k = 1; k <= 7; ++k) sides.push_back(read_png(fdir / ("side" + std::to_string(k)) / name));
    for (std::size_t i = 0; i < avg.pixels.size(); ++i) {
      double mean = 0;
      for (const auto& s : sides) mean += s.pixels[i] / 7.0;
      ASSERT_LE(std::abs(mean - avg.pixels[i]), 1.0) << name << " pixel " << i;
    }
  }
}

TEST_F(CliPredictEval, MissingCheckpointIsDataError) {
  EXPECT_EQ(dexined_cli({"predict", "--out", (dir_ / "x").string(), "--checkpoint", (dir_ / "nope.ckpt").string(),
                         "--input", list_.string()})
                .code,
            3);
}

TEST_F(CliPredictEval, PerfectCopiesScoreOne) {
  const fs::path copies = dir_ / "copies";
  fs::create_directories(copies);
  for (const auto& e : read_dataset_list(list_)) fs::copy_file(e.gt, copies / e.gt.filename());
  const CliRun r = dexined_cli({"eval", "--out", (dir_ / "ev").string(), "--pred-dir", copies.string(), "--gt-list",
                             list_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = read_json(dir_ / "ev" / "summary.json");
  EXPECT_DOUBLE_EQ(s["ods"], 1.0);
  EXPECT_DOUBLE_EQ(s["ois"], 1.0);
  EXPECT_DOUBLE_EQ(s["ap"], 1.0);
  EXPECT_EQ(s["n_images"], 3);
  EXPECT_TRUE(s.contains("config"));
  std::ifstream csv(dir_ / "ev" / "pr.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "threshold,precision,recall,f");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, eval::EvalConfig{}.thresholds.size());
}

TEST_F(CliPredictEval, MissingPredictionsAreListed) {
  const fs::path partial = dir_ / "partial";
  fs::create_directories(partial);
  const auto entries = read_dataset_list(list_);
  fs::copy_file(entries[0].gt, partial / entries[0].gt.filename(), fs::copy_options::overwrite_existing);
  const CliRun r = dexined_cli({"eval", "--out", (dir_ / "ev2").string(), "--pred-dir", partial.string(),
                             "--gt-list", list_.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("toy1.png"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("toy2.png"), std::string::npos) << r.err;
}

TEST(Cli, AblateTableHasGridSeedsAndMetrics) {
  const fs::path dir = scratch_dir("ablate");
  const CliRun r = dexined_cli(with({"ablate", "--out", dir.string(), "--seed", "11", "--set", "toy.count=2", "--set",
                                  "toy.height=32", "--set", "toy.width=32", "--set", "train.max_epochs=1", "--set",
                                  "ablation.repeats=2"},
                                 kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  const json m = read_json(dir / "manifest.json");
  EXPECT_EQ(m["rows"].size(), 12u);
  EXPECT_EQ(m["seeds"], json({11, 12}));
  std::ifstream csv(dir / "ablation.csv");
  std::string header;
  std::getline(csv, header);
  for (const char* col : {"ods", "ois", "ap", "seed"}) EXPECT_NE(header.find(col), std::string::npos);
  std::set<std::string> variants;
  for (const auto& row : m["rows"]) variants.insert(row["variant"].get<std::string>());
  EXPECT_EQ(variants.size(), 6u);
}
