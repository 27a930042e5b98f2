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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccnn/dataset.hpp"
#include "ccnn/network.hpp"

namespace ccnn {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t batch_size = 256;
  double momentum = 0.9;
  double initial_lr = 0.1;
  double lr_decay_factor = 0.1;
  std::size_t plateau_patience = 3;   // evaluations without improvement
  double min_improvement = 0.001;     // accuracy fraction, i.e. 0.1 percentage points
  double min_lr = 1e-5;               // training stops once lr drops below this
  double weight_decay = 1e-5;
  double dropout_final = 0.5;
  double dropout_mid = 0.2;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 30;        // per phase for the separate strategy

  void validate() const;

  // Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

enum class TrainStrategy { MultiTask, Separate };

const char* to_string(TrainStrategy s);
TrainStrategy strategy_from_string(const std::string& s);

using Gradients = std::map<std::string, Tensor<float>>;

struct OptimizerState {
  std::map<std::string, Tensor<float>> velocity;
  double lr = 0.1;
  std::vector<double> history;  // evaluation accuracies
  double best = -1.0;
  std::size_t stale = 0;
  std::size_t decays = 0;

  static OptimizerState start(const TrainConfig& config) {
    OptimizerState s;
    s.lr = config.initial_lr;
    return s;
  }
};

// Weight decay only touches roles that is_decayed() accepts.
bool is_decayed(ParamRole role);

// v <- momentum*v - lr*(g + wd*w); w <- w + v, for every name in grads.
// Throws UsageError for gradients of unknown or non-trainable parameters and
// DimensionError on shape mismatch.
void sgd_step(Parameters<float>& params, const Gradients& grads, OptimizerState& state,
              const TrainConfig& config);

// Records an evaluation. Returns true when it decays the learning rate.
bool lr_on_plateau(OptimizerState& state, double accuracy, const TrainConfig& config);

// Epochs count on across the phases of the separate strategy.
struct EpochMetrics {
  std::size_t epoch = 0;
  std::string head;
  double loss = 0.0;        // mean cross-entropy on the evaluation set, infer mode
  double accuracy = 0.0;    // top-1 on the evaluation set, infer mode
  double lr = 0.0;          // learning rate used during the epoch
  double train_loss = 0.0;  // mean mini-batch loss while training
};

struct TrainResult {
  Network<float> network;
  std::vector<EpochMetrics> metrics;
};

struct HeadEvaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Infer-mode mean loss and accuracy for each exit, in one pass per batch.
std::map<std::string, HeadEvaluation> evaluate_heads(const Network<float>& net,
                                                     const Dataset& data,
                                                     const std::vector<std::string>& exits,
                                                     std::size_t batch_size = 64);

struct TrainOptions {
  // Drives the plateau schedule and the reported metrics. The training set
  // is used when null.
  const Dataset* eval = nullptr;
  std::function<void(const EpochMetrics&)> on_epoch;
  // Called after each phase: "multitask", "final", then each branch name.
  std::function<void(const std::string& phase, const Network<float>&)> on_phase_end;
};

TrainResult train(Network<float> net, const Dataset& data, const TrainConfig& config,
                  TrainStrategy strategy, const TrainOptions& options = {});

// "epoch,head,loss,accuracy,lr" header plus one line per row.
std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

// Keeps large freed blocks in the heap so per-batch tensors do not fault in
// fresh pages each step. No-op outside glibc.
void tune_allocator();

}  // namespace ccnn
