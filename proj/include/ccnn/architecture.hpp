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

// Declarative description of the network: a backbone of conv / maxpool /
// fire layers, a final classification head, and optional early-exit
// branches that each attach a fire module plus head to a backbone layer.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "ccnn/tensor.hpp"

namespace ccnn {

struct ConvLayer {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

struct MaxPoolLayer {
  std::string name;
};

// Squeeze 1x1 (M -> s) feeding parallel expand 1x1 (s -> e1) and expand 3x3
// (s -> e3); outputs concatenate to N = e1 + e3 channels.
struct FireSpec {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t squeeze = 0;
  std::size_t expand1x1 = 0;
  std::size_t expand3x3 = 0;

  // s = N/8, e1 = e3 = N/2. N must be divisible by 8.
  static FireSpec standard(std::string name, std::size_t in_channels,
                           std::size_t out_channels);
  void validate() const;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, FireSpec>;

const std::string& layer_name(const LayerSpec& layer);

enum class HeadKind { FC, GAP, WAP };

const char* to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadSpec {
  HeadKind kind = HeadKind::WAP;
  std::size_t hidden_units = 1024;  // FC only
  std::size_t num_classes = 0;
  double dropout_rate = 0.5;
};

struct BranchSpec {
  std::string name;          // parameter scope, e.g. "mid_a"
  std::string attach_after;  // backbone layer name
  FireSpec fire;
  HeadSpec head;
};

struct NetworkSpec {
  std::size_t input_channels = 1;
  std::size_t input_size = 64;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> backbone;
  HeadSpec head;
  std::vector<BranchSpec> branches;
};

inline constexpr const char* kFinalHead = "final";
inline constexpr const char* kBackboneScope = "backbone";

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

// Throws SpecError describing the first inconsistency found.
void validate(const NetworkSpec& spec);

// Output shape of every backbone layer, in order. Validates channel flow.
std::vector<FeatureShape> backbone_shapes(const NetworkSpec& spec);

std::size_t backbone_index(const NetworkSpec& spec, const std::string& layer);

const BranchSpec& find_branch(const NetworkSpec& spec, const std::string& name);

// Names of all exits: branches in declaration order, then "final".
std::vector<std::string> exit_names(const NetworkSpec& spec);

// The reference layout: conv1(3x3/1, 64) -> maxpool -> fire2, fire3 (128) ->
// maxpool -> fire4, fire5 (256) -> maxpool -> fire6..fire9 (384, 384, 512,
// 512) -> WAP head, with mid_a (fire5 dimensions) after fire4 and mid_b
// (fire7 dimensions) after fire6. width_divisor scales every channel count.
NetworkSpec default_network_spec(std::size_t num_classes, std::size_t width_divisor = 1,
                                 bool with_branches = true,
                                 HeadKind head = HeadKind::WAP,
                                 std::size_t input_size = 64);

enum class ParamRole {
  ConvWeight,
  BnGamma,
  BnBeta,
  BnMean,
  BnVar,
  GwapWeight,
  LinearWeight,
  LinearBias,
  Unassigned,
};

const char* to_string(ParamRole role);

// Running statistics are state, not trainable parameters.
bool is_trainable(ParamRole role);

struct ParamDecl {
  std::string name;
  Shape shape;
  ParamRole role;
  std::size_t fan_in = 0;  // for initialization of weights
};

// Every tensor the spec implies, in stable order. Names are scoped
// "<scope>/<layer>/<tensor>", e.g. backbone/fire2/squeeze/w, mid_a/gwap/w.
std::vector<ParamDecl> declare_parameters(const NetworkSpec& spec);

// Scope of a parameter name: the text before the first '/'.
std::string param_scope(const std::string& name);

}  // namespace ccnn
