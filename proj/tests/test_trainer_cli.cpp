/* Copyright 2026 The teedkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "teed/checkpoint.hpp"
#include "teed/cli.hpp"
#include "teed/trainer.hpp"
#include "test_util.hpp"

namespace teed {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig tiny_config(const fs::path& dir) {
  RunConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.seed = 77;
  c.augmentation.crop = 32;
  c.checkpoint_dir = dir / "ckpt";
  c.output_dir = dir / "out";
  return c;
}

TrainingSet tiny_data() {
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(testing::synthetic_shapes(40, 500 + i));
  return in_memory(std::move(samples));
}

// Dataset on disk in the documented layout.
fs::path write_layout(const fs::path& root, int count, int size) {
  fs::create_directories(root / "imgs/train");
  fs::create_directories(root / "edge_maps/train");
  for (int i = 0; i < count; ++i) {
    const auto s = testing::synthetic_shapes(size, 900 + i);
    const std::string name = "s" + std::to_string(i) + ".png";
    Tensor<float> gray({1, size, size});
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t k = 0; k < plane; ++k) gray[k] = s.image[k];
    save_png(gray, root / "imgs/train" / name);
    save_png(s.gt, root / "edge_maps/train" / name);
  }
  return root;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "teed");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

TEST(RunConfig, ValidationAndParsing) {
  RunConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(false), ContractError);
  EXPECT_THROW(parse_run_config(R"({"epochs": 0})"), ContractError);
  EXPECT_THROW(parse_run_config(R"({"epoch": 3})"), ContractError);
  EXPECT_THROW(parse_run_config(R"({"optimizer": {"momentum": 0.9}})"), ContractError);
  const auto p = parse_run_config(R"({"epochs": 3, "batch_size": 4, "seed": 9,
      "optimizer": {"lr": 0.001, "weight_decay": 0.0},
      "loss": {"band_radius": 3}, "augmentation": {"crop": 64}})");
  EXPECT_EQ(p.epochs, 3);
  EXPECT_EQ(p.batch_size, 4);
  EXPECT_EQ(p.seed, 9u);
  EXPECT_EQ(p.lr.initial, 0.001);
  EXPECT_EQ(p.adam.weight_decay, 0.0);
  EXPECT_EQ(p.loss.band_radius, 3);
  EXPECT_EQ(p.augmentation.crop, 64);
  RunConfig missing;
  missing.datasets = {"/nonexistent/teed/data"};
  EXPECT_THROW(missing.validate(true), DataError);
}

TEST(Train, WritesCheckpointsAndLog) {
  const auto dir = testing::scratch_dir("train_basic");
  const auto r = train(tiny_config(dir), tiny_data());
  ASSERT_EQ(r.checkpoints.size(), 2u);
  EXPECT_EQ(r.checkpoints[0], epoch_checkpoint(dir / "ckpt", 1));
  EXPECT_EQ(r.checkpoints[0].filename(), "epoch_001.ckpt");
  ASSERT_EQ(r.log.size(), 4u);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    EXPECT_EQ(r.log[i].iteration, static_cast<std::int64_t>(i + 1));
    EXPECT_EQ(r.log[i].epoch, i < 2 ? 1 : 2);
    EXPECT_EQ(r.log[i].lr, 8e-4);
  }
  std::ifstream csv(dir / "out/loss.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "iter,epoch,lr,dloss,wce1,wce2,wce3,trcg");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_TRUE(load_checkpoint<float>(r.checkpoints[1]) == r.params);
}

TEST(Train, EmptySetAndDecay) {
  const auto dir = testing::scratch_dir("train_empty");
  EXPECT_THROW(train(tiny_config(dir), in_memory({})), DataError);
  auto c = tiny_config(dir);
  c.lr.decay_epoch = 1;
  const auto r = train(c, tiny_data());
  EXPECT_EQ(r.log.front().lr, 8e-4);
  EXPECT_EQ(r.log.back().lr, 8e-5);
}

TEST(Train, DeterministicRunsMatchBitForBit) {
  const auto a = testing::scratch_dir("train_det_a"), b = testing::scratch_dir("train_det_b");
  train(tiny_config(a), tiny_data());
  train(tiny_config(b), tiny_data());
  EXPECT_EQ(slurp(a / "ckpt/epoch_001.ckpt"), slurp(b / "ckpt/epoch_001.ckpt"));
  EXPECT_EQ(slurp(a / "out/loss.csv"), slurp(b / "out/loss.csv"));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto full = testing::scratch_dir("train_full"), part = testing::scratch_dir("train_part");
  const auto whole = train(tiny_config(full), tiny_data());
  auto first = tiny_config(part);
  first.epochs = 1;
  train(first, tiny_data());
  auto rest = tiny_config(part);
  rest.resume = part / "ckpt/epoch_001.ckpt";
  const auto resumed = train(rest, tiny_data());
  EXPECT_TRUE(resumed.params == whole.params);
  ASSERT_EQ(resumed.log.size(), 2u);
  EXPECT_EQ(resumed.log[0].iteration, 3);
  EXPECT_EQ(resumed.log[1].loss.total, whole.log[3].loss.total);
  EXPECT_EQ(slurp(part / "out/loss.csv"), slurp(full / "out/loss.csv"));
  EXPECT_EQ(slurp(part / "ckpt/epoch_002.ckpt"), slurp(full / "ckpt/epoch_002.ckpt"));
}

TEST(Train, NonFiniteLossNamesBatch) {
  const auto dir = testing::scratch_dir("train_nan");
  auto c = tiny_config(dir);
  c.lr.initial = 1e30;
  c.epochs = 1;
  c.passes_per_epoch = 3;
  try {
    train(c, tiny_data());
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("shapes_"), std::string::npos) << e.what();
  }
}

TEST(Predict, TeedupRunsAtOneAndAHalf) {
  const auto params = build<float>(ModelConfig{}, 4);
  Rng rng(2);
  const auto image = testing::random_tensor<float>({3, 100, 100}, rng, 0.0, 1.0);
  const auto up = predict_image(params, image, true);
  const auto manual = predict_maps(params, resize_bilinear(image, 150, 150));
  for (int k = 0; k < 4; ++k) {
    ASSERT_EQ(up.maps[k].shape(), (Shape{1, 100, 100}));
    const auto back = resize_bilinear(manual.maps[k], 100, 100);
    for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(up.maps[k][i], std::clamp(back[i], 0.0f, 1.0f), 1e-6);
  }
  const auto plain = predict_image(params, image, false);
  EXPECT_EQ(plain.dfuse(), predict_maps(params, image).dfuse());
}

TEST(Predict, FilesSkipBadInputs) {
  const auto dir = testing::scratch_dir("predict_files");
  const auto params = build<float>(ModelConfig{}, 4);
  Tensor<float> gray({1, 24, 20}, 0.5f);
  save_png(gray, dir / "ok.png");
  std::ofstream(dir / "bad.png") << "garbage";
  std::ostringstream warnings;
  PredictOptions opt;
  opt.output_dir = dir / "out";
  EXPECT_EQ(predict_files(params, {dir / "ok.png", dir / "bad.png"}, opt, warnings), 1u);
  EXPECT_NE(warnings.str().find("bad.png"), std::string::npos);
  EXPECT_EQ(load_gt(dir / "out/ok.png").shape(), (Shape{1, 24, 20}));
  EXPECT_THROW(predict_files(params, {dir / "bad.png"}, opt, warnings), DataError);
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(testing::scratch_dir("cli"));
    write_layout(*dir_ / "data", 3, 40);
    nlohmann::json cfg = {{"datasets", {(*dir_ / "data").string()}},
                          {"epochs", 1},
                          {"batch_size", 2},
                          {"seed", 3},
                          {"augmentation", {{"crop", 32}}},
                          {"checkpoint_dir", (*dir_ / "ckpt").string()},
                          {"output_dir", (*dir_ / "out").string()}};
    std::ofstream(*dir_ / "run.json") << cfg.dump(2);
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path* dir_;
  const fs::path& dir() const { return *dir_; }
};
fs::path* Cli::dir_ = nullptr;

TEST_F(Cli, HelpAndUsage) {
  EXPECT_EQ(cli({"--help"}), kExitOk);
  EXPECT_EQ(cli({}), kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}), kExitUsage);
  EXPECT_EQ(cli({"train"}), kExitUsage);
}

TEST_F(Cli, InspectArch) {
  std::string out;
  ASSERT_EQ(cli({"inspect", "--arch"}, &out), kExitOk);
  EXPECT_NE(out.find("total parameters: 54650"), std::string::npos) << out;
  int rows = 0;
  for (const auto& l : layer_table(ModelConfig{})) rows += out.find(l.name) != std::string::npos;
  EXPECT_EQ(rows, 18);
}

TEST_F(Cli, TrainPredictEvalInspect) {
  std::string out, err;
  ASSERT_EQ(cli({"train", "--config", (dir() / "run.json").string(), "--deterministic"}, &out, &err), kExitOk) << err;
  EXPECT_NE(out.find("epoch 1"), std::string::npos) << out;
  const auto ckpt = epoch_checkpoint(dir() / "ckpt", 1);
  ASSERT_TRUE(fs::exists(ckpt));

  EXPECT_EQ(cli({"inspect", "--ckpt", ckpt.string()}, &out), kExitOk);
  EXPECT_NE(out.find("total parameters: 54650"), std::string::npos);

  ASSERT_EQ(cli({"predict", "--ckpt", ckpt.string(), "--input", (dir() / "data/imgs/train").string(), "--out",
                 (dir() / "pred").string()}),
            kExitOk);
  EXPECT_TRUE(fs::exists(dir() / "pred/s0.png"));
  EXPECT_EQ(load_gt(dir() / "pred/s0.png").shape(), (Shape{1, 40, 40}));

  ASSERT_EQ(cli({"predict", "--ckpt", ckpt.string(), "--input", (dir() / "data/imgs/train/s1.png").string(), "--out",
                 (dir() / "maps").string(), "--all-maps", "--teedup"}),
            kExitOk);
  for (const char* suffix : {"_y1", "_y2", "_y3", "_dfuse"}) {
    EXPECT_TRUE(fs::exists(dir() / "maps" / (std::string("s1") + suffix + ".png"))) << suffix;
  }

  ASSERT_EQ(cli({"eval", "--pred", (dir() / "pred").string(), "--gt", (dir() / "data/edge_maps/train").string(),
                 "--out", (dir() / "report.json").string()}),
            kExitOk);
  const auto j = nlohmann::json::parse(std::ifstream(dir() / "report.json"));
  EXPECT_EQ(j["n_images"], 3);
  for (const char* key : {"ods", "ois"}) {
    EXPECT_GE(j[key].get<double>(), 0.0) << key;
    EXPECT_LE(j[key].get<double>(), 1.0) << key;
  }
}

TEST_F(Cli, EvalPerfectCorpusAndErrors) {
  const auto gt = dir() / "data/edge_maps/train";
  ASSERT_EQ(cli({"eval", "--pred", gt.string(), "--gt", gt.string(), "--out", (dir() / "self.json").string()}), kExitOk);
  const auto j = nlohmann::json::parse(std::ifstream(dir() / "self.json"));
  EXPECT_DOUBLE_EQ(j["ods"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["ois"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["psnr"].get<double>(), 99.0);
  EXPECT_TRUE(fs::exists(dir() / "self.csv"));

  EXPECT_EQ(cli({"eval", "--pred", gt.string(), "--gt", gt.string(), "--out", (dir() / "x.json").string(), "--tol",
                 "0"}),
            kExitUsage);
  fs::create_directories(dir() / "empty");
  EXPECT_EQ(cli({"eval", "--pred", (dir() / "empty").string(), "--gt", gt.string(), "--out",
                 (dir() / "x.json").string()}),
            kExitData);
  fs::create_directories(dir() / "partial");
  fs::copy_file(gt / "s0.png", dir() / "partial/s0.png", fs::copy_options::overwrite_existing);
  std::string err;
  EXPECT_EQ(cli({"eval", "--pred", (dir() / "partial").string(), "--gt", gt.string(), "--out",
                 (dir() / "x.json").string()},
                nullptr, &err),
            kExitData);
  EXPECT_NE(err.find("s1"), std::string::npos) << err;
}

TEST_F(Cli, DataAndNumericExitCodes) {
  EXPECT_EQ(cli({"train", "--config", (dir() / "nope.json").string()}), kExitData);
  nlohmann::json bad = {{"datasets", {(dir() / "missing_root").string()}}, {"epochs", 1}};
  std::ofstream(dir() / "bad.json") << bad.dump();
  EXPECT_EQ(cli({"train", "--config", (dir() / "bad.json").string()}), kExitData);
  nlohmann::json zero = {{"datasets", {(dir() / "data").string()}}, {"epochs", 0}};
  std::ofstream(dir() / "zero.json") << zero.dump();
  EXPECT_EQ(cli({"train", "--config", (dir() / "zero.json").string()}), kExitUsage);

  nlohmann::json blow = {{"datasets", {(dir() / "data").string()}},
                         {"epochs", 1},
                         {"batch_size", 1},
                         {"passes_per_epoch", 3},
                         {"augmentation", {{"crop", 32}}},
                         {"optimizer", {{"lr", 1e30}}},
                         {"checkpoint_dir", (dir() / "ckpt_nan").string()},
                         {"output_dir", (dir() / "out_nan").string()}};
  std::ofstream(dir() / "nan.json") << blow.dump();
  EXPECT_EQ(cli({"train", "--config", (dir() / "nan.json").string()}), kExitNumeric);

  std::ofstream(dir() / "corrupt.ckpt") << "TEEDCKPT\x01 garbage";
  EXPECT_EQ(cli({"inspect", "--ckpt", (dir() / "corrupt.ckpt").string()}), kExitData);
  EXPECT_EQ(cli({"predict", "--ckpt", (dir() / "corrupt.ckpt").string(), "--input",
                 (dir() / "data/imgs/train").string(), "--out", (dir() / "p2").string()}),
            kExitData);
  fs::create_directories(dir() / "noimgs");
  const auto good = dir() / "good.ckpt";
  save_checkpoint(build<float>(ModelConfig{}, 1), good);
  EXPECT_EQ(cli({"predict", "--ckpt", good.string(), "--input", (dir() / "noimgs").string(), "--out",
                 (dir() / "p3").string()}),
            kExitData);
}

TEST_F(Cli, Curate) {
  fs::create_directories(dir() / "pool");
  for (int i = 0; i < 5; ++i) {
    Tensor<float> img({1, 16, 16});
    for (std::size_t k = 0; k < img.size(); ++k) img[k] = k < 128 ? 0.4f : 0.4f + 0.04f * i;
    save_png(img, dir() / "pool" / ("p" + std::to_string(i) + ".png"));
  }
  save_png(Tensor<float>({1, 8, 730}, 0.5f), dir() / "pool/huge.png");
  ASSERT_EQ(cli({"curate", "--images", (dir() / "pool").string(), "--k", "3", "--out", (dir() / "uded.csv").string()}),
            kExitOk);
  std::ifstream csv(dir() / "uded.csv");
  std::string header, row;
  std::getline(csv, header);
  EXPECT_EQ(header, "id,iqr,rank");
  std::vector<std::string> ids;
  while (std::getline(csv, row)) ids.push_back(row.substr(0, row.find(',')));
  EXPECT_EQ(ids, (std::vector<std::string>{"p0", "p2", "p4"}));

  ASSERT_EQ(cli({"curate", "--images", (dir() / "pool").string(), "--k", "1", "--out", (dir() / "one.csv").string()}),
            kExitOk);
  std::ifstream one(dir() / "one.csv");
  std::getline(one, header);
  std::getline(one, row);
  EXPECT_EQ(row.substr(0, 3), "p2,");
  EXPECT_EQ(cli({"curate", "--images", (dir() / "pool").string(), "--k", "6", "--out", (dir() / "x.csv").string()}),
            kExitData);
  EXPECT_EQ(cli({"curate", "--images", (dir() / "pool").string(), "--k", "0", "--out", (dir() / "x.csv").string()}),
            kExitUsage);
}

}  // namespace
}  // namespace teed
