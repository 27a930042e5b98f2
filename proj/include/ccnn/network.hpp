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

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ccnn/architecture.hpp"
#include "ccnn/parameters.hpp"
#include "ccnn/tape.hpp"

namespace ccnn {

/// A NetworkSpec bound to its parameter tensors.
template <typename T>
class Network {
 public:
  Network() = default;

  // Requires a one-to-one match between params and declare_parameters(spec).
  Network(NetworkSpec spec, Parameters<T> params);

  // Fan-in scaled uniform weights, BN at identity, GWAP uniform 1/(H*W).
  static Network build(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  Parameters<T>& parameters() { return params_; }
  const Parameters<T>& parameters() const { return params_; }
  const std::vector<FeatureShape>& shapes() const { return shapes_; }
  bool initialized() const { return !params_.empty(); }

  // Head dropout is a training hyperparameter; the trainer overrides it.
  void set_dropout(const std::string& exit, double rate);

  template <typename U>
  Network<U> cast() const {
    return Network<U>(spec_, params_.template cast<U>());
  }

  // Inference-mode logits [B, classes] for one exit.
  Tensor<T> logits(const Tensor<T>& batch, const std::string& exit) const;

 private:
  NetworkSpec spec_;
  Parameters<T> params_;
  std::vector<FeatureShape> shapes_;
};

// Records one forward evaluation of a Network on a Tape. In Train mode BN
// uses batch statistics and updates running statistics, dropout is live, and
// trainable parameters of non-frozen scopes become differentiable leaves.
// Frozen scopes always run as in inference.
template <typename T>
class ForwardPass {
 public:
  ForwardPass(Tape<T>& tape, Network<T>& net, Mode mode, std::mt19937_64* rng = nullptr);
  ForwardPass(Tape<T>& tape, const Network<T>& net);

  void freeze_scope(const std::string& scope) { frozen_.insert(scope); }
  bool frozen(const std::string& scope) const { return frozen_.count(scope) != 0; }

  Var input(const Tensor<T>& batch, bool requires_grad = false);

  // Backbone layers [begin, end).
  Var backbone(Var x, std::size_t begin, std::size_t end);
  Var branch(Var attach_features, const BranchSpec& branch);
  Var final_head(Var features);

  Var conv_bn_relu(Var x, const std::string& prefix, std::size_t stride);
  Var fire(Var x, const std::string& prefix);
  Var head(Var features, const HeadSpec& head, const std::string& scope);

  // Logits for each requested exit, in the order requested. The backbone is
  // run only as far as the deepest requested exit needs.
  std::vector<Var> run(Var x, const std::vector<std::string>& exits);

  // Leaf for a parameter, created on first use.
  Var param(const std::string& name);
  const std::vector<std::pair<std::string, Var>>& bound() const { return bound_; }

  Tape<T>& tape() { return tape_; }

 private:
  Mode mode_for(const std::string& scope) const {
    return frozen(scope) ? Mode::Infer : mode_;
  }

  Tape<T>& tape_;
  const Network<T>& net_;
  Network<T>* mutable_net_ = nullptr;
  Mode mode_;
  std::mt19937_64* rng_ = nullptr;
  std::set<std::string> frozen_;
  std::vector<std::pair<std::string, Var>> bound_;
  std::unordered_map<std::string, Var> lookup_;
};

}  // namespace ccnn
