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

#include <algorithm>
#include <random>
#include <sstream>

#include "ccnn/cost_model.hpp"
#include "ccnn/network.hpp"
#include "support/gradcheck.hpp"
#include "support/reference.hpp"

using namespace ccnn;

TEST(StandardConvCost, Examples) {
  EXPECT_EQ(standard_conv_cost(1, 64, 64), 2359296u);
  EXPECT_EQ(standard_conv_cost(1, 1, 1, 1), 1u);
}

TEST(StandardConvCost, MatchesInstrumentedDirectConvolution) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t m = 1 + rng() % 3, n = 1 + rng() % 4, d = 1 + rng() % 5;
    for (std::size_t k : {1u, 3u}) {
      auto x = ccnn::testing::random_tensor({m, d, d}, rng);
      auto w = ccnn::testing::random_tensor({n, m, k, k}, rng);
      auto r = ccnn::testing::direct_conv(x, w, 1, true);
      EXPECT_EQ(r.window_macs, standard_conv_cost(m, n, d, k));
    }
  }
}

TEST(FireCost, Examples) {
  EXPECT_EQ(fire_cost(64, 128, 32), 11534336u);
  EXPECT_EQ(fire_cost(256, 384, 8), 6684672u);
  EXPECT_THROW(fire_cost(64, 100, 32), ParameterError);
}

TEST(FireCost, ClosedFormEqualsConstituentConvolutions) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t m = 1 + rng() % 600, n = 8 * (1 + rng() % 80), d = 1 + rng() % 70;
    const std::uint64_t sum = standard_conv_cost(m, n / 8, d, 1) +
                              standard_conv_cost(n / 8, n / 2, d, 1) +
                              standard_conv_cost(n / 8, n / 2, d, 3);
    ASSERT_EQ(fire_cost(m, n, d), sum) << m << " " << n << " " << d;
    ASSERT_EQ(fire_cost(FireSpec::standard("f", m, n), d), sum);
  }
}

TEST(FireCost, NonDefaultSizingSumsConstituents) {
  FireSpec f{"f", 10, 12, 3, 5, 7};
  EXPECT_EQ(fire_cost(f, 4), standard_conv_cost(10, 3, 4, 1) + standard_conv_cost(3, 5, 4, 1) +
                                 standard_conv_cost(3, 7, 4, 3));
}

TEST(ReductionRatio, Examples) {
  EXPECT_EQ(reduction_ratio(64, 64), Rational::make(1, 12));
  EXPECT_EQ(reduction_ratio(64, 128), Rational::make(11, 72));
  const double r = reduction_ratio(64, 128).value();
  EXPECT_GT(1.0 / r, 6.0);
  EXPECT_LT(1.0 / r, 9.0);
}

TEST(ReductionRatio, TimesStandardCostIsFireCostExactly) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t m = 1 + rng() % 600, n = 8 * (1 + rng() % 80), d = 1 + rng() % 70;
    const Rational r = reduction_ratio(m, n);
    const std::uint64_t standard = standard_conv_cost(m, n, d);
    ASSERT_EQ(standard * r.num % r.den, 0u);
    ASSERT_EQ(standard / r.den * r.num + (standard % r.den) * r.num / r.den, fire_cost(m, n, d));
  }
}

TEST(NetworkCost, ReferenceLayerParameters) {
  auto report = network_cost(default_network_spec(3755));
  const std::vector<std::pair<std::string, std::uint64_t>> want = {
      {"conv1", 832},      {"fire2", 11840},   {"fire3", 12864},
      {"fire4", 46208},    {"fire5", 50304},   {"fire6", 106176},
      {"fire7", 112320},   {"fire8", 190720},  {"fire9", 198912}};
  for (const auto& [name, params] : want) EXPECT_EQ(report.layer(name).params, params) << name;
  EXPECT_EQ(report.layer("conv1").macs, 2359296u);
  EXPECT_EQ(report.layer("fire2").macs, 11534336u);
  EXPECT_EQ(report.layer("fire6").macs, 6684672u);
  EXPECT_THROW(report.layer("fire10"), SpecError);
}

TEST(NetworkCost, ExitTotalsWithinThreePercent) {
  auto report = network_cost(default_network_spec(3755));
  const std::vector<std::pair<std::string, double>> want = {
      {"mid_a", 0.52e8}, {"mid_b", 0.66e8}, {"final", 0.91e8}};
  for (const auto& [name, macs] : want) {
    const double got = static_cast<double>(report.exit(name).macs);
    EXPECT_NEAR(got / macs, 1.0, 0.03) << name << " " << got;
  }
  EXPECT_LT(report.exit("mid_a").macs, report.exit("mid_b").macs);
  EXPECT_LT(report.exit("mid_b").macs, report.exit("final").macs);
}

TEST(NetworkCost, ExitTotalIsSharedPrefixPlusBranch) {
  auto spec = default_network_spec(3755);
  auto report = network_cost(spec);
  std::uint64_t prefix = 0;
  for (const auto& l : report.layers) {
    if (l.scope != kBackboneScope) continue;
    prefix += l.macs;
    if (l.name == "fire4") {
      EXPECT_EQ(report.exit("mid_a").macs, prefix + report.scope_macs("mid_a"));
    }
    if (l.name == "fire6") {
      EXPECT_EQ(report.exit("mid_b").macs, prefix + report.scope_macs("mid_b"));
    }
  }
  EXPECT_EQ(report.exit("final").macs, prefix + report.scope_macs("final"));
}

TEST(NetworkCost, MatchesAllocatedParameters) {
  for (HeadKind kind : {HeadKind::WAP, HeadKind::GAP, HeadKind::FC}) {
    auto spec = default_network_spec(37, 2, true, kind);
    auto report = network_cost(spec);
    auto net = Network<float>::build(spec, 1);
    EXPECT_EQ(report.total_params, net.parameters().element_count());
    for (const auto& layer : report.layers) {
      std::size_t allocated = 0;
      const std::string prefix = (layer.scope == kBackboneScope ? "backbone/" + layer.name
                                                                : layer.name) + "/";
      for (const auto& e : net.parameters().entries()) {
        if (e.name.rfind(prefix, 0) == 0) allocated += e.value.size();
      }
      EXPECT_EQ(layer.params, allocated) << layer.name;
    }
  }
}

TEST(NetworkCost, TotalsInvariantToTraversalOrder) {
  auto report = network_cost(default_network_spec(3755));
  std::mt19937_64 rng(4);
  auto layers = report.layers;
  std::shuffle(layers.begin(), layers.end(), rng);
  std::uint64_t params = 0, macs = 0;
  for (const auto& l : layers) {
    params += l.params;
    macs += l.macs;
  }
  EXPECT_EQ(params, report.total_params);
  EXPECT_EQ(macs, report.total_macs);
}

TEST(NetworkCost, EmptySpecGivesEmptyReport) {
  NetworkSpec spec;
  auto report = network_cost(spec);
  EXPECT_TRUE(report.layers.empty());
  EXPECT_TRUE(report.exits.empty());
  EXPECT_EQ(report.total_params, 0u);
  EXPECT_EQ(report.total_macs, 0u);
}

TEST(NetworkCost, InvalidSpecPropagates) {
  auto spec = default_network_spec(3755);
  spec.branches[0].attach_after = "nowhere";
  EXPECT_THROW(network_cost(spec), SpecError);
}

TEST(NetworkCost, StorageInDecimalMegabytes) {
  auto final_only = network_cost(default_network_spec(3755, 1, false));
  EXPECT_NEAR(final_only.storage.bytes() / 1e6 / 10.3, 1.0, 0.1);
  auto cascaded = network_cost(default_network_spec(3755));
  EXPECT_EQ(cascaded.storage.bytes(), 4.0 * cascaded.total_params);
  EXPECT_NEAR(cascaded.storage.bytes() / 1e6 / 20.4, 1.0, 0.1);
  auto quantized = network_cost(default_network_spec(3755), QuantScheme{});
  EXPECT_NEAR(quantized.storage.bytes() / 1e6 / 3.3, 1.0, 0.1);
  EXPECT_GE(quantized.storage.bytes() / 1e6, 3.2);
  EXPECT_LE(quantized.storage.bytes() / 1e6, 3.4);
}

TEST(Formatting, Thousands) {
  EXPECT_EQ(with_thousands(0), "0");
  EXPECT_EQ(with_thousands(832), "832");
  EXPECT_EQ(with_thousands(11840), "11,840");
  EXPECT_EQ(with_thousands(2359296), "2,359,296");
  EXPECT_EQ(with_thousands(100000), "100,000");
}

TEST(Formatting, CsvHasOneLinePerLayer) {
  auto report = network_cost(default_network_spec(3755));
  std::istringstream in(format_csv(report));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer,params,macs");
  std::getline(in, line);
  EXPECT_EQ(line, "conv1,832,2359296");
  std::size_t layer_lines = 1, exit_lines = 0;
  bool storage = false;
  while (std::getline(in, line)) {
    if (line.rfind("exit:", 0) == 0) ++exit_lines;
    else if (line.rfind("storage_bytes,", 0) == 0) storage = true;
    else if (line.rfind("total,", 0) != 0) ++layer_lines;
  }
  EXPECT_EQ(layer_lines, report.layers.size());
  EXPECT_EQ(exit_lines, 3u);
  EXPECT_TRUE(storage);
  const auto table = format_table(report);
  EXPECT_NE(table.find("198,912"), std::string::npos);
  EXPECT_NE(table.find("fire9"), std::string::npos);
}
