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

#pragma once

// Closed-form parameter and multiply-accumulate accounting. Nothing here
// allocates or runs the network; the counts follow from the spec alone.
//
// Conventions: one MAC = one op. Convolutions carry no bias and each is
// followed by batch norm holding 4 values per channel (gamma, beta, running
// mean, running variance), all counted as parameters. Pooling, batch norm,
// activations and softmax cost no MACs; GWAP costs one MAC per weight and
// linear layers one per weight.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccnn/architecture.hpp"
#include "ccnn/quantizer.hpp"

namespace ccnn {

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  // Reduced to lowest terms.
  static Rational make(std::uint64_t num, std::uint64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  friend bool operator==(const Rational&, const Rational&) = default;
};

// k^2 * M * N * D^2.
std::uint64_t standard_conv_cost(std::uint64_t in_channels, std::uint64_t out_channels,
                                 std::uint64_t size, std::uint64_t kernel = 3);

// (M + 5N) * N * D^2 / 8 for the default s = N/8, e1 = e3 = N/2 sizing.
// Throws ParameterError when 8 does not divide N.
std::uint64_t fire_cost(std::uint64_t in_channels, std::uint64_t out_channels,
                        std::uint64_t size);

// Closed form for default-sized fire modules; otherwise the sum of the
// squeeze, expand1x1 and expand3x3 convolution costs.
std::uint64_t fire_cost(const FireSpec& fire, std::uint64_t size);

// fire_cost / standard_conv_cost = 1/72 + 5N/(72M); D cancels.
Rational reduction_ratio(std::uint64_t in_channels, std::uint64_t out_channels);

struct LayerCost {
  std::string name;   // "conv1", "fire2", "mid_a/fire", "final/classifier", ...
  std::string scope;  // "backbone", "final", or a branch name
  std::uint64_t params = 0;
  std::uint64_t macs = 0;

  // Storage breakdown: element and tensor counts per quantization bucket.
  std::uint64_t conv_weights = 0, conv_tensors = 0;
  std::uint64_t bn_values = 0;
  std::uint64_t gwap_weights = 0, gwap_tensors = 0;
  std::uint64_t linear_params = 0, linear_tensors = 0;
};

struct ExitCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;
  std::vector<ExitCost> exits;  // branches in declaration order, then "final"
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::optional<QuantScheme> quant;
  StorageReport storage;  // float32 everywhere when quant is empty

  const ExitCost& exit(const std::string& name) const;
  const LayerCost& layer(const std::string& name) const;

  // MACs of every layer in the given scope (a branch or "final" head).
  std::uint64_t scope_macs(const std::string& scope) const;
};

// An empty backbone yields an empty report with zero totals.
CostReport network_cost(const NetworkSpec& spec,
                        const std::optional<QuantScheme>& quant = std::nullopt);

// Aligned, human-readable table with thousands separators.
std::string format_table(const CostReport& report);

// One "layer,params,macs" line per layer (header line first), then
// "exit:<name>,params,macs" lines and a "storage_bytes,<value>" line.
std::string format_csv(const CostReport& report);

std::string with_thousands(std::uint64_t value);

}  // namespace ccnn
