// Copyright 2026 The ccnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccnn/cli.hpp"
#include "ccnn/model_file.hpp"

using namespace ccnn;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ccnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Rows of the cascade table after the header.
std::vector<std::vector<std::string>> rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> cells;
    for (std::string c; ls >> c;) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST(CliParse, SubcommandRequired) {
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"frobnicate"}).code, 0);
}

TEST(CliParse, HelpIsSuccess) {
  const CliRun r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("cost-report"), std::string::npos);
}

TEST(CliCost, DefaultReportTotals) {
  const CliRun r = cli({"cost-report"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("5,352,705"), std::string::npos);
  EXPECT_NE(r.out.find("2,689,259"), std::string::npos);
}

TEST(CliCost, CsvAndQuantAndBadQuant) {
  const CliRun csv = cli({"cost-report", "--csv", "--no-branches"});
  ASSERT_EQ(csv.code, 0) << csv.err;
  EXPECT_EQ(csv.out.rfind("layer,params,macs", 0), 0u);
  EXPECT_NE(csv.out.find("fire2,11840,11534336"), std::string::npos);

  const CliRun q = cli({"cost-report", "--quant", "conv=8,fc=4,gwap=8"});
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_NE(q.out.find("3.23 MB"), std::string::npos);

  const CliRun bad = cli({"cost-report", "--quant", "conv=99"});
  EXPECT_NE(bad.code, 0);
  EXPECT_FALSE(bad.err.empty());
}

TEST_F(CliTest, MissingModelIsAnError) {
  const CliRun r = cli({"eval", "--model", path("absent.ccnn"), "--data", "synth:2x2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error"), std::string::npos);
}

TEST(CliData, SynthSources) {
  const Dataset a = load_dataset("synth:3x4@2", 32);
  EXPECT_EQ(a.size(), 12u);
  EXPECT_EQ(a.num_classes, 3u);
  EXPECT_EQ(a.samples[0].image.dim(1), 32u);
  const Dataset b = load_dataset("synth:3\xc3\x97" "4@2", 32);
  EXPECT_EQ(b.samples[5].image.data()[100], a.samples[5].image.data()[100]);
  EXPECT_THROW(load_dataset("synth:3y4", 32), ParameterError);
  EXPECT_THROW(load_dataset("synth:3x", 32), ParameterError);
  EXPECT_THROW(load_dataset("nowhere/at/all", 32), DataError);
}

TEST_F(CliTest, IdxDirectoryIsResized) {
  Dataset d = load_dataset("synth:2x3", 28);
  write_idx(d, path("train-images.idx"), path("train-labels.idx"));
  const Dataset r = load_dataset(dir_.string(), 64);
  ASSERT_EQ(r.size(), 6u);
  EXPECT_EQ(r.samples[0].image.dim(1), 64u);
  EXPECT_EQ(r.samples[4].label, d.samples[4].label);
  const Dataset same = load_dataset("idx:" + path("train-images.idx") + "," + path("train-labels.idx"), 28);
  // IDX stores bytes, so values come back to the nearest 1/255.
  EXPECT_NEAR(same.samples[3].image.data()[200], d.samples[3].image.data()[200], 0.5 / 255 + 1e-6);
}

TEST_F(CliTest, GntClassesFollowTagOrder) {
  auto record = [](std::uint16_t tag, std::uint8_t ink) {
    GntRecord r;
    r.tag = tag;
    r.width = 6;
    r.height = 4;
    r.bitmap.assign(24, ink);
    return r;
  };
  write_gnt(path("b.gnt"), {record(0xB0A2, 10), record(0xB0A1, 20)});
  write_gnt(path("a.gnt"), {record(0xB0A3, 30)});
  const Dataset d = load_dataset(dir_.string(), 16);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.num_classes, 3u);
  // a.gnt is read first; its tag is the largest.
  EXPECT_EQ(d.samples[0].label, 2u);
  EXPECT_EQ(d.samples[1].label, 1u);
  EXPECT_EQ(d.samples[2].label, 0u);
}

// synth -> train (separate) -> quantize -> eval -> cascade sweep -> inspect
TEST_F(CliTest, FullPipeline) {
  {
    std::ofstream cfg(path("cfg.json"));
    cfg << R"({"batch_size": 16, "max_epochs": 2, "initial_lr": 0.02, "seed": 3})";
  }
  const CliRun tr = cli({"train", "--data", "synth:3x16@1", "--eval-data", "synth:3x6@9", "--classes",
                      "3", "--width-divisor", "8", "--strategy", "separate", "--config",
                      path("cfg.json"), "--out", path("m.ccnn"), "--metrics", path("m.csv")});
  ASSERT_EQ(tr.code, 0) << tr.err;
  ASSERT_TRUE(fs::exists(path("m.ccnn")));
  std::ifstream metrics(path("m.csv"));
  std::string header;
  std::getline(metrics, header);
  EXPECT_EQ(header, "epoch,head,loss,accuracy,lr");

  const CliRun q = cli({"quantize", "--model", path("m.ccnn"), "--out", path("q.ccnn")});
  ASSERT_EQ(q.code, 0) << q.err;
  EXPECT_TRUE(load_model(path("q.ccnn")).quant.has_value());
  // Quantizing twice is refused.
  EXPECT_NE(cli({"quantize", "--model", path("q.ccnn"), "--out", path("qq.ccnn")}).code, 0);

  const CliRun ev = cli({"eval", "--model", path("q.ccnn"), "--data", "synth:3x6@9", "--head", "mid-a"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("mid_a"), std::string::npos);
  EXPECT_EQ(ev.out.find("final"), std::string::npos);
  EXPECT_NE(cli({"eval", "--model", path("q.ccnn"), "--data", "synth:3x6", "--head", "mid-z"}).code, 0);

  const CliRun cas = cli({"cascade", "--model", path("q.ccnn"), "--data", "synth:3x6@9", "--threshold",
                       "0,0.5,1.01", "--trace", path("t.csv")});
  ASSERT_EQ(cas.code, 0) << cas.err;
  const auto table = rows(cas.out);
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0][0], "0");
  EXPECT_EQ(table[0][1], "1");  // every sample exits early at threshold 0
  EXPECT_EQ(table[2][1], "0");  // and none above 1
  std::ifstream trace(path("t.csv"));
  std::size_t lines = 0;
  for (std::string l; std::getline(trace, l);) ++lines;
  EXPECT_EQ(lines, 19u);

  EXPECT_NE(cli({"cascade", "--model", path("q.ccnn"), "--data", "synth:3x6", "--threshold", "-1"}).code, 0);
  EXPECT_NE(cli({"cascade", "--model", path("q.ccnn"), "--data", "synth:3x6", "--threshold", "x"}).code, 0);

  const CliRun in = cli({"inspect", "--model", path("q.ccnn")});
  ASSERT_EQ(in.code, 0) << in.err;
  EXPECT_NE(in.out.find("conv=8"), std::string::npos);
  EXPECT_NE(in.out.find("mid_a mid_b final"), std::string::npos);
}
