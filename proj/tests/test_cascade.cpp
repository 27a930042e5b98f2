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

#include <cmath>
#include <numeric>
#include <sstream>

#include "ccnn/cascade.hpp"
#include "ccnn/cost_model.hpp"
#include "ccnn/trainer.hpp"

using namespace ccnn;

namespace {

// Every head's probabilities for every sample, computed independently.
struct Replay {
  std::map<std::string, std::vector<std::vector<float>>> probs;

  Replay(const Network<float>& net, const Dataset& data) {
    for (const auto& exit : exit_names(net.spec())) {
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto p = softmax_rows(net.logits(data.samples[i].image, exit));
        probs[exit].emplace_back(p.values().begin(), p.values().end());
      }
    }
  }

  CascadeResult decide(std::size_t i, const CascadePolicy& policy, const CascadeCosts& c) const {
    const auto& gate = probs.at(policy.exit_head)[i];
    const std::size_t top = argmax(std::span<const float>(gate));
    if (gate[top] >= policy.threshold) return {top, ExitPoint::Early, gate[top], c.early};
    std::vector<std::span<const float>> parts;
    if (policy.fuse_late) {
      for (const auto& [exit, p] : probs) {
        if (exit != policy.exit_head && exit != kFinalHead) parts.emplace_back(p[i]);
      }
    }
    parts.emplace_back(probs.at(kFinalHead)[i]);
    const auto mean = fuse_probabilities(parts);
    const std::size_t best = argmax(std::span<const double>(mean));
    return {best, ExitPoint::Late, mean[best], c.late};
  }
};

class CascadeTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto train_set = synth_glyphs({4, 16, 0.1, 1.0, 1, 32});
    test_ = new Dataset(synth_glyphs({4, 10, 0.1, 1.0, 2, 32}));
    TrainConfig c;
    c.batch_size = 8;
    c.max_epochs = 3;
    c.initial_lr = 0.02;
    c.seed = 5;
    net_ = new Network<float>(train(Network<float>::build(
                                        default_network_spec(4, 8, true, HeadKind::WAP, 32), 6),
                                    train_set, c, TrainStrategy::MultiTask)
                                  .network);
  }
  static void TearDownTestSuite() {
    delete net_;
    delete test_;
  }
  static Network<float>* net_;
  static Dataset* test_;
};

Network<float>* CascadeTest::net_ = nullptr;
Dataset* CascadeTest::test_ = nullptr;

}  // namespace

TEST(FuseProbabilities, MeanOfTwo) {
  std::vector<float> b{0.6f, 0.4f}, f{0.2f, 0.8f};
  auto mean = fuse_probabilities({b, f});
  EXPECT_NEAR(mean[0], 0.4, 1e-7);
  EXPECT_NEAR(mean[1], 0.6, 1e-7);
  EXPECT_EQ(argmax(std::span<const double>(mean)), 1u);
  std::vector<float> short_row{1.0f};
  EXPECT_THROW(fuse_probabilities({b, short_row}), DimensionError);
}

TEST(CascadePolicy, Validation) {
  CascadePolicy p;
  EXPECT_NO_THROW(p.validate());
  p.threshold = -0.1;
  EXPECT_THROW(p.validate(), ParameterError);
  p.threshold = std::nan("");
  EXPECT_THROW(p.validate(), ParameterError);
  p = CascadePolicy{};
  p.exit_head = "final";
  EXPECT_THROW(p.validate(), ParameterError);
  p.exit_head = "mid_q";
  EXPECT_THROW(cascade_costs(default_network_spec(10), p), SpecError);
}

TEST(CascadeCosts, ReferenceNetwork) {
  auto spec = default_network_spec(3755);
  auto report = network_cost(spec);
  CascadePolicy p;
  auto c = cascade_costs(spec, p);
  EXPECT_EQ(c.early, report.exit("mid_a").macs);
  EXPECT_EQ(c.late, report.exit("final").macs + report.scope_macs("mid_a") +
                        report.scope_macs("mid_b"));
  p.fuse_late = false;
  EXPECT_EQ(cascade_costs(spec, p).late, report.exit("final").macs + report.scope_macs("mid_a"));
}

TEST(Cascade, UninitializedNetwork) {
  EXPECT_THROW(cascade_infer(Tensor<float>({1, 32, 32}), Network<float>{}, CascadePolicy{}),
               UsageError);
}

TEST_F(CascadeTest, EmptyDatasetAndUnknownHead) {
  EXPECT_THROW(cascade_eval(Dataset{}, *net_, CascadePolicy{}), ParameterError);
  EXPECT_THROW(head_eval(*test_, *net_, "mid_z"), SpecError);
  EXPECT_THROW(cascade_infer(Tensor<float>({1, 16, 16}), *net_, CascadePolicy{}),
               DimensionError);
}

TEST_F(CascadeTest, ThresholdZeroIsMidAEverywhere) {
  CascadePolicy p;
  p.threshold = 0.0;
  auto s = cascade_eval(*test_, *net_, p);
  EXPECT_EQ(s.early_exit_fraction(), 1.0);
  EXPECT_EQ(s.accuracy(), head_eval(*test_, *net_, "mid_a"));
  EXPECT_EQ(s.mean_mac_cost(), static_cast<double>(s.costs.early));
}

TEST_F(CascadeTest, ThresholdAboveOneNeverExitsEarly) {
  CascadePolicy p;
  p.threshold = 1.01;
  auto s = cascade_eval(*test_, *net_, p);
  EXPECT_EQ(s.early_exits, 0u);
  EXPECT_EQ(s.mean_mac_cost(), static_cast<double>(s.costs.late));
  p.fuse_late = false;
  EXPECT_EQ(cascade_eval(*test_, *net_, p).accuracy(), head_eval(*test_, *net_, "final"));
}

TEST_F(CascadeTest, SweepMatchesReplayOracle) {
  const Replay oracle(*net_, *test_);
  double previous = 2.0;
  for (bool fuse : {true, false}) {
    previous = 2.0;
    for (double t : {0.0, 0.25, 0.5, 0.75, 0.9, 0.98, 1.01}) {
      CascadePolicy p;
      p.threshold = t;
      p.fuse_late = fuse;
      std::vector<CascadeResult> trace;
      auto s = cascade_eval(*test_, *net_, p, &trace);
      ASSERT_EQ(trace.size(), test_->size());
      std::size_t early = 0, correct = 0;
      for (std::size_t i = 0; i < trace.size(); ++i) {
        const CascadeResult want = oracle.decide(i, p, s.costs);
        ASSERT_EQ(trace[i].predicted, want.predicted) << t << " sample " << i;
        ASSERT_EQ(trace[i].exit, want.exit) << t << " sample " << i;
        ASSERT_EQ(trace[i].confidence, want.confidence) << t << " sample " << i;
        ASSERT_EQ(trace[i].mac_cost, want.mac_cost);
        early += want.exit == ExitPoint::Early;
        correct += want.predicted == test_->samples[i].label;
      }
      EXPECT_EQ(s.early_exits, early);
      EXPECT_EQ(s.correct, correct);
      EXPECT_LE(s.early_exit_fraction(), previous) << t;
      previous = s.early_exit_fraction();
      // Mean cost is the exact convex combination of the two paths.
      EXPECT_EQ(s.total_mac_cost,
                s.early_exits * s.costs.early + (s.samples - s.early_exits) * s.costs.late);
      const double f = s.early_exit_fraction();
      EXPECT_NEAR(s.mean_mac_cost(), f * s.costs.early + (1 - f) * s.costs.late, 1e-6);
      EXPECT_GE(s.mean_mac_cost(), static_cast<double>(s.costs.early));
      EXPECT_LE(s.mean_mac_cost(), static_cast<double>(s.costs.late));
    }
  }
}

TEST_F(CascadeTest, PerImageInferenceIsPureAndMatchesBatch) {
  CascadePolicy p;
  p.threshold = 0.9;
  std::vector<std::size_t> idx(test_->size());
  std::iota(idx.begin(), idx.end(), 0);
  auto batch = cascade_batch(test_->images(idx), *net_, p);
  for (std::size_t i = 0; i < test_->size(); ++i) {
    auto a = cascade_infer(test_->samples[i].image, *net_, p);
    auto b = cascade_infer(test_->samples[i].image, *net_, p);
    EXPECT_EQ(a.predicted, b.predicted);
    EXPECT_EQ(a.confidence, b.confidence);
    EXPECT_EQ(a.predicted, batch[i].predicted);
    EXPECT_EQ(a.exit, batch[i].exit);
    EXPECT_EQ(a.confidence, batch[i].confidence);
  }
}

TEST_F(CascadeTest, HeadEvalSingleSample) {
  Dataset one;
  one.num_classes = test_->num_classes;
  one.samples.push_back(test_->samples[0]);
  auto logits = net_->logits(one.samples[0].image, "final");
  one.samples[0].label = argmax(std::span<const float>(logits.data()));
  EXPECT_EQ(head_eval(one, *net_, "final"), 1.0);
  one.samples[0].label = (one.samples[0].label + 1) % one.num_classes;
  EXPECT_EQ(head_eval(one, *net_, "final"), 0.0);
}

TEST_F(CascadeTest, TraceCsv) {
  CascadePolicy p;
  p.threshold = 0.5;
  std::vector<CascadeResult> trace;
  cascade_eval(*test_, *net_, p, &trace);
  std::istringstream in(cascade_trace_csv(*test_, trace, p));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sample,exit,confidence,correct");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_TRUE(line.find(",mid_a,") != std::string::npos ||
                line.find(",late,") != std::string::npos);
  }
  EXPECT_EQ(rows, test_->size());
}
