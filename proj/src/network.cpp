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

#include "ccnn/network.hpp"

#include <algorithm>
#include <cmath>

namespace ccnn {

template <typename T>
Network<T>::Network(NetworkSpec spec, Parameters<T> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  const auto decls = declare_parameters(spec_);
  shapes_ = backbone_shapes(spec_);
  if (decls.size() != params_.size()) {
    throw SpecError("parameter set has " + std::to_string(params_.size()) +
                    " tensors but the spec declares " + std::to_string(decls.size()));
  }
  for (const ParamDecl& d : decls) {
    if (!params_.contains(d.name)) throw SpecError("missing parameter " + d.name);
    const auto& e = params_.entry(d.name);
    if (e.value.shape() != d.shape) {
      throw SpecError("parameter " + d.name + " has shape " + shape_str(e.value.shape()) +
                      ", spec declares " + shape_str(d.shape));
    }
    if (e.role != d.role) throw SpecError("parameter " + d.name + " has the wrong role");
  }
}

template <typename T>
Network<T> Network<T>::build(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters<T> params;
  for (const ParamDecl& d : declare_parameters(spec)) {
    Tensor<T> t(d.shape);
    switch (d.role) {
      case ParamRole::ConvWeight:
      case ParamRole::LinearWeight: {
        const double bound = std::sqrt(6.0 / static_cast<double>(d.fan_in));
        for (T& v : t.values()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
      case ParamRole::GwapWeight:
        t.fill(static_cast<T>(1.0 / static_cast<double>(d.shape[1] * d.shape[2])));
        break;
      case ParamRole::BnGamma:
      case ParamRole::BnVar:
        t.fill(T(1));
        break;
      default:
        break;
    }
    params.add(d.name, d.role, std::move(t));
  }
  return Network(spec, std::move(params));
}

template <typename T>
void Network<T>::set_dropout(const std::string& exit, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must be in [0,1)");
  if (exit == kFinalHead) {
    spec_.head.dropout_rate = rate;
    return;
  }
  for (BranchSpec& b : spec_.branches) {
    if (b.name == exit) {
      b.head.dropout_rate = rate;
      return;
    }
  }
  throw SpecError("unknown exit '" + exit + "'");
}

template <typename T>
Tensor<T> Network<T>::logits(const Tensor<T>& batch, const std::string& exit) const {
  Tape<T> tape;
  ForwardPass<T> pass(tape, *this);
  return tape.value(pass.run(pass.input(batch), {exit}).front());
}

template <typename T>
ForwardPass<T>::ForwardPass(Tape<T>& tape, Network<T>& net, Mode mode,
                            std::mt19937_64* rng)
    : tape_(tape), net_(net), mutable_net_(&net), mode_(mode), rng_(rng) {}

template <typename T>
ForwardPass<T>::ForwardPass(Tape<T>& tape, const Network<T>& net)
    : tape_(tape), net_(net), mode_(Mode::Infer) {}

template <typename T>
Var ForwardPass<T>::input(const Tensor<T>& batch, bool requires_grad) {
  const NetworkSpec& s = net_.spec();
  const Shape one{s.input_channels, s.input_size, s.input_size};
  const bool ok = (batch.rank() == 4 && Shape(batch.shape().begin() + 1, batch.shape().end()) == one) ||
                  batch.shape() == one;
  if (!ok) {
    throw DimensionError("network input must be " + shape_str(one) + " per sample, got " +
                         shape_str(batch.shape()));
  }
  if (batch.rank() == 3) {
    return tape_.leaf(batch.reshaped({1, one[0], one[1], one[2]}), requires_grad);
  }
  return tape_.leaf(batch, requires_grad);
}

template <typename T>
Var ForwardPass<T>::param(const std::string& name) {
  if (auto it = lookup_.find(name); it != lookup_.end()) return it->second;
  const auto& e = net_.parameters().entry(name);
  const bool rg = mode_ == Mode::Train && is_trainable(e.role) && !frozen(param_scope(name));
  Var v = tape_.leaf(e.value, rg);
  lookup_.emplace(name, v);
  bound_.emplace_back(name, v);
  return v;
}

template <typename T>
Var ForwardPass<T>::conv_bn_relu(Var x, const std::string& prefix, std::size_t stride) {
  Var y = ad::conv2d(tape_, x, param(prefix + "/w"), stride, Padding::Same);
  Var gamma = param(prefix + "/bn_gamma");
  Var beta = param(prefix + "/bn_beta");
  const std::string mean = prefix + "/bn_mean";
  const std::string var = prefix + "/bn_var";
  if (mode_for(param_scope(prefix)) == Mode::Train) {
    if (!mutable_net_) throw UsageError("training forward pass needs a mutable network");
    auto& p = mutable_net_->parameters();
    y = ad::batchnorm_train(tape_, y, gamma, beta, &p.at(mean), &p.at(var));
  } else {
    const auto& p = net_.parameters();
    y = ad::batchnorm_infer(tape_, y, gamma, beta, p.at(mean), p.at(var));
  }
  return ad::relu(tape_, y);
}

template <typename T>
Var ForwardPass<T>::fire(Var x, const std::string& prefix) {
  Var s = conv_bn_relu(x, prefix + "/squeeze", 1);
  Var e1 = conv_bn_relu(s, prefix + "/expand1x1", 1);
  Var e3 = conv_bn_relu(s, prefix + "/expand3x3", 1);
  return ad::concat_channels(tape_, e1, e3);
}

template <typename T>
Var ForwardPass<T>::head(Var features, const HeadSpec& h, const std::string& scope) {
  const Mode mode = mode_for(scope);
  if (mode == Mode::Train && h.dropout_rate > 0.0 && !rng_) {
    throw UsageError("training with dropout needs a random generator");
  }
  std::mt19937_64 unused;
  std::mt19937_64& rng = rng_ ? *rng_ : unused;
  Var pooled;
  switch (h.kind) {
    case HeadKind::WAP:
      pooled = ad::gwap(tape_, features, param(scope + "/gwap/w"));
      break;
    case HeadKind::GAP:
      pooled = ad::global_avg_pool(tape_, features);
      break;
    case HeadKind::FC: {
      Var flat = ad::dropout(tape_, ad::flatten(tape_, features), h.dropout_rate, mode, rng);
      Var hidden = ad::relu(tape_, ad::linear(tape_, flat, param(scope + "/hidden/w"),
                                              param(scope + "/hidden/b")));
      return ad::linear(tape_, hidden, param(scope + "/classifier/w"),
                        param(scope + "/classifier/b"));
    }
  }
  Var dropped = ad::dropout(tape_, pooled, h.dropout_rate, mode, rng);
  return ad::linear(tape_, dropped, param(scope + "/classifier/w"),
                    param(scope + "/classifier/b"));
}

template <typename T>
Var ForwardPass<T>::backbone(Var x, std::size_t begin, std::size_t end) {
  const auto& layers = net_.spec().backbone;
  if (begin > end || end > layers.size()) throw UsageError("backbone: bad layer range");
  for (std::size_t i = begin; i < end; ++i) {
    const std::string prefix = std::string(kBackboneScope) + "/" + layer_name(layers[i]);
    if (const auto* conv = std::get_if<ConvLayer>(&layers[i])) {
      x = conv_bn_relu(x, prefix, conv->stride);
    } else if (std::holds_alternative<FireSpec>(layers[i])) {
      x = fire(x, prefix);
    } else {
      x = ad::maxpool2x2(tape_, x);
    }
  }
  return x;
}

template <typename T>
Var ForwardPass<T>::branch(Var attach_features, const BranchSpec& b) {
  Var x = fire(attach_features, b.name + "/" + b.fire.name);
  return head(x, b.head, b.name);
}

template <typename T>
Var ForwardPass<T>::final_head(Var features) {
  return head(features, net_.spec().head, kFinalHead);
}

template <typename T>
std::vector<Var> ForwardPass<T>::run(Var x, const std::vector<std::string>& exits) {
  const NetworkSpec& spec = net_.spec();
  if (!net_.initialized()) throw UsageError("network has no parameters");
  std::size_t depth = 0;
  bool want_final = false;
  for (const std::string& e : exits) {
    if (e == kFinalHead) {
      want_final = true;
      depth = spec.backbone.size();
    } else {
      depth = std::max(depth, backbone_index(spec, find_branch(spec, e).attach_after) + 1);
    }
  }
  std::vector<Var> out(exits.size());
  for (std::size_t i = 0; i < depth; ++i) {
    x = backbone(x, i, i + 1);
    const std::string& here = layer_name(spec.backbone[i]);
    for (std::size_t k = 0; k < exits.size(); ++k) {
      if (exits[k] == kFinalHead) continue;
      const BranchSpec& b = find_branch(spec, exits[k]);
      if (b.attach_after == here) out[k] = branch(x, b);
    }
  }
  if (want_final) {
    Var logits = final_head(x);
    for (std::size_t k = 0; k < exits.size(); ++k) {
      if (exits[k] == kFinalHead) out[k] = logits;
    }
  }
  return out;
}

template class Network<float>;
template class Network<double>;
template class ForwardPass<float>;
template class ForwardPass<double>;

}  // namespace ccnn
