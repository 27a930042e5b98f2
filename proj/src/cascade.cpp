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


#include "ccnn/cascade.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ccnn/cost_model.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn {
namespace {

std::vector<const BranchSpec*> fused_branches(const NetworkSpec& spec,
                                              const CascadePolicy& policy) {
  std::vector<const BranchSpec*> out;
  if (!policy.fuse_late) return out;
  for (const auto& b : spec.branches) {
    if (b.name != policy.exit_head) out.push_back(&b);
  }
  return out;
}

Tensor<float> take_rows(const Tensor<float>& t, const std::vector<std::size_t>& rows) {
  Shape shape = t.shape();
  const std::size_t per = t.size() / shape[0];
  shape[0] = rows.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(t.raw() + rows[i] * per, t.raw() + (rows[i] + 1) * per, out.raw() + i * per);
  }
  return out;
}

}  // namespace

std::vector<double> fuse_probabilities(const std::vector<std::span<const float>>& parts) {
  if (parts.empty()) throw ParameterError("fuse_probabilities: nothing to fuse");
  std::vector<double> mean(parts.front().size(), 0.0);
  for (const auto& p : parts) {
    if (p.size() != mean.size()) throw DimensionError("fuse_probabilities: length mismatch");
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
  }
  for (double& m : mean) m /= static_cast<double>(parts.size());
  return mean;
}

void CascadePolicy::validate() const {
  if (!(threshold >= 0.0) || std::isnan(threshold)) {
    throw ParameterError("cascade threshold must be a non-negative probability");
  }
  if (exit_head.empty() || exit_head == kFinalHead) {
    throw ParameterError("cascade exit head must be a branch");
  }
}

CascadeCosts cascade_costs(const NetworkSpec& spec, const CascadePolicy& policy) {
  policy.validate();
  find_branch(spec, policy.exit_head);
  const CostReport report = network_cost(spec);
  CascadeCosts c;
  c.early = report.exit(policy.exit_head).macs;
  c.late = report.exit(kFinalHead).macs + report.scope_macs(policy.exit_head);
  for (const BranchSpec* b : fused_branches(spec, policy)) c.late += report.scope_macs(b->name);
  return c;
}

std::vector<CascadeResult> cascade_batch(const Tensor<float>& images, const Network<float>& net,
                                         const CascadePolicy& policy) {
  policy.validate();
  if (!net.initialized()) throw UsageError("cascade: network has no parameters");
  const NetworkSpec& spec = net.spec();
  const BranchSpec& gate = find_branch(spec, policy.exit_head);
  const auto fused = fused_branches(spec, policy);
  const CascadeCosts costs = cascade_costs(spec, policy);
  const std::size_t gate_depth = backbone_index(spec, gate.attach_after) + 1;

  Tape<float> tape;
  ForwardPass<float> pass(tape, net);
  Var x = pass.input(images);
  const std::size_t batch = tape.value(x).dim(0);

  // Fused branches attached before the gate are run for everyone.
  std::vector<std::pair<const BranchSpec*, Var>> early_fused;
  for (std::size_t i = 0; i < gate_depth; ++i) {
    x = pass.backbone(x, i, i + 1);
    for (const BranchSpec* b : fused) {
      if (b->attach_after == layer_name(spec.backbone[i])) {
        early_fused.emplace_back(b, pass.branch(x, *b));
      }
    }
  }
  const Tensor<float> gate_probs = softmax_rows(tape.value(pass.branch(x, gate)));
  const std::size_t classes = gate_probs.dim(1);

  std::vector<CascadeResult> results(batch);
  std::vector<std::size_t> late;
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<const float> row(gate_probs.raw() + b * classes, classes);
    const std::size_t top = argmax(row);
    if (static_cast<double>(row[top]) >= policy.threshold) {
      results[b] = {top, ExitPoint::Early, row[top], costs.early};
    } else {
      late.push_back(b);
    }
  }
  if (late.empty()) return results;

  // Late path on the remaining samples only.
  std::vector<Tensor<float>> parts;
  for (const auto& [b, v] : early_fused) parts.push_back(softmax_rows(take_rows(tape.value(v), late)));
  Var y = tape.leaf(take_rows(tape.value(x), late));
  for (std::size_t i = gate_depth; i < spec.backbone.size(); ++i) {
    y = pass.backbone(y, i, i + 1);
    for (const BranchSpec* b : fused) {
      if (b->attach_after == layer_name(spec.backbone[i])) {
        parts.push_back(softmax_rows(tape.value(pass.branch(y, *b))));
      }
    }
  }
  parts.push_back(softmax_rows(tape.value(pass.final_head(y))));

  std::vector<std::span<const float>> rows(parts.size());
  for (std::size_t k = 0; k < late.size(); ++k) {
    for (std::size_t j = 0; j < parts.size(); ++j) {
      rows[j] = std::span<const float>(parts[j].raw() + k * classes, classes);
    }
    const std::vector<double> mean = fuse_probabilities(rows);
    const std::size_t top = argmax(std::span<const double>(mean));
    results[late[k]] = {top, ExitPoint::Late, mean[top], costs.late};
  }
  return results;
}

CascadeResult cascade_infer(const Tensor<float>& image, const Network<float>& net,
                            const CascadePolicy& policy) {
  if (image.rank() == 4 && image.dim(0) != 1) {
    throw DimensionError("cascade_infer takes a single image");
  }
  return cascade_batch(image, net, policy).front();
}

CascadeStats cascade_eval(const Dataset& data, const Network<float>& net,
                          const CascadePolicy& policy, std::vector<CascadeResult>* trace) {
  if (data.empty()) throw ParameterError("cascade_eval: empty dataset");
  CascadeStats stats;
  stats.costs = cascade_costs(net.spec(), policy);
  if (trace) trace->clear();
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    std::span<const std::size_t> batch(idx.data() + start, std::min(chunk, idx.size() - start));
    const auto results = cascade_batch(data.images(batch), net, policy);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const CascadeResult& r = results[i];
      const bool ok = r.predicted == data.samples[batch[i]].label;
      ++stats.samples;
      stats.correct += ok;
      stats.total_mac_cost += r.mac_cost;
      if (r.exit == ExitPoint::Early) {
        ++stats.early_exits;
        stats.early_correct += ok;
      }
      if (trace) trace->push_back(r);
    }
  }
  return stats;
}

double head_eval(const Dataset& data, const Network<float>& net, const std::string& head) {
  if (head != kFinalHead) find_branch(net.spec(), head);
  return evaluate_heads(net, data, {head}).at(head).accuracy;
}

std::string cascade_trace_csv(const Dataset& data, const std::vector<CascadeResult>& trace,
                              const CascadePolicy& policy) {
  if (trace.size() != data.size()) throw ParameterError("trace does not match dataset");
  std::ostringstream os;
  os << "sample,exit,confidence,correct\n";
  os.precision(9);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    os << data.samples[i].source_id << ','
       << (r.exit == ExitPoint::Early ? policy.exit_head : std::string("late")) << ','
       << r.confidence << ',' << (r.predicted == data.samples[i].label ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace ccnn
