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
#include <span>
#include <string>
#include <vector>

#include "ccnn/dataset.hpp"
#include "ccnn/network.hpp"

namespace ccnn {

struct CascadePolicy {
  // Early exit when the gating head's top probability is >= threshold, so
  // 0 always exits early and anything above 1 never does.
  double threshold = 0.98;
  std::string exit_head = "mid_a";
  // Late prediction averages the final head's probabilities with those of
  // every other branch (mid_b in the reference network).
  bool fuse_late = true;

  void validate() const;
};

enum class ExitPoint { Early, Late };

struct CascadeResult {
  std::size_t predicted = 0;
  ExitPoint exit = ExitPoint::Late;
  double confidence = 0.0;  // top probability of the distribution that decided
  std::uint64_t mac_cost = 0;
};

// MACs charged to each path, from the cost model.
struct CascadeCosts {
  std::uint64_t early = 0;  // shared prefix + gating branch
  std::uint64_t late = 0;   // full backbone + final head + every branch evaluated
};

CascadeCosts cascade_costs(const NetworkSpec& spec, const CascadePolicy& policy);

struct CascadeStats {
  std::size_t samples = 0;
  std::size_t correct = 0;
  std::size_t early_exits = 0;
  std::size_t early_correct = 0;
  std::uint64_t total_mac_cost = 0;
  CascadeCosts costs;

  double accuracy() const { return ratio(correct, samples); }
  double early_exit_fraction() const { return ratio(early_exits, samples); }
  double mean_mac_cost() const {
    return samples ? static_cast<double>(total_mac_cost) / static_cast<double>(samples) : 0.0;
  }
  double early_accuracy() const { return ratio(early_correct, early_exits); }
  double late_accuracy() const {
    return ratio(correct - early_correct, samples - early_exits);
  }

 private:
  static double ratio(std::size_t a, std::size_t b) {
    return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  }
};

// Elementwise mean of equally sized probability vectors.
std::vector<double> fuse_probabilities(const std::vector<std::span<const float>>& parts);

// One image [C, H, W] or [1, C, H, W].
CascadeResult cascade_infer(const Tensor<float>& image, const Network<float>& net,
                            const CascadePolicy& policy);

// Batched form; results agree bitwise with per-image cascade_infer.
std::vector<CascadeResult> cascade_batch(const Tensor<float>& images, const Network<float>& net,
                                         const CascadePolicy& policy);

// Empty dataset throws ParameterError. `trace` receives one result per sample.
CascadeStats cascade_eval(const Dataset& data, const Network<float>& net,
                          const CascadePolicy& policy,
                          std::vector<CascadeResult>* trace = nullptr);

// Standalone top-1 accuracy of one exit.
double head_eval(const Dataset& data, const Network<float>& net, const std::string& head);

// "sample,exit,confidence,correct" lines.
std::string cascade_trace_csv(const Dataset& data, const std::vector<CascadeResult>& trace,
                              const CascadePolicy& policy);

}  // namespace ccnn
