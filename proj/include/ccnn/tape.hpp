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

// Reverse-mode differentiation over the kernels in ops.hpp. A Tape records
// each executed op together with the state its backward pass needs; calling
// backward() replays the record in reverse and accumulates gradients into
// every node that requires one. A Tape is single-owner.

#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ccnn/ops.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad,
                          requires_grad ? std::move(fn) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Tensor<T>& grad(Var v) const { return node(v).grad; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Tensor<T>& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
      throw DimensionError("gradient " + shape_str(g.shape()) +
                           " does not match value " + shape_str(n.value.shape()));
    }
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  // Seeds d(root)/d(root) = 1; root must hold a single element.
  void backward(Var root) {
    if (value(root).size() != 1) {
      throw UsageError("backward: root must be a scalar, got " +
                       shape_str(value(root).shape()));
    }
    backward(root, Tensor<T>(value(root).shape(), T(1)));
  }

  void backward(Var root, const Tensor<T>& seed) {
    if (!node(root).requires_grad) {
      throw UsageError("backward: root does not depend on any differentiable input");
    }
    accumulate(root, seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      // Closures only accumulate into earlier nodes, so n.grad stays stable.
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw UsageError("tape: unknown variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw UsageError("tape: unknown variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

namespace ad {

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, std::size_t stride, Padding padding) {
  Tensor<T> y = ccnn::conv2d(tape.value(x), tape.value(w), stride, padding);
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w);
  return tape.push(std::move(y), rg, [x, w, stride, padding](Tape<T>& t, const Tensor<T>& g) {
    auto grads = conv2d_backward(g, t.value(x), t.value(w), stride, padding,
                                 t.requires_grad(x));
    t.accumulate(w, grads.weights);
    if (t.requires_grad(x)) t.accumulate(x, grads.input);
  });
}

template <typename T>
Var detail_push_batchnorm(Tape<T>& tape, Var x, Var gamma, Var beta,
                          BatchNormResult<T> r) {
  const bool rg = tape.requires_grad(x) || tape.requires_grad(gamma) ||
                  tape.requires_grad(beta);
  return tape.push(std::move(r.output), rg,
                   [x, gamma, beta, cache = std::move(r.cache)](Tape<T>& t,
                                                               const Tensor<T>& g) {
                     auto grads = batchnorm_backward(g, cache, t.value(gamma));
                     t.accumulate(x, grads.input);
                     t.accumulate(gamma, grads.gamma);
                     t.accumulate(beta, grads.beta);
                   });
}

// Normalizes with batch statistics; non-null running statistics are updated.
template <typename T>
Var batchnorm_train(Tape<T>& tape, Var x, Var gamma, Var beta, Tensor<T>* running_mean,
                    Tensor<T>* running_var) {
  BatchNormResult<T> r = ccnn::batchnorm_train(tape.value(x), tape.value(gamma),
                                               tape.value(beta), running_mean, running_var);
  return detail_push_batchnorm(tape, x, gamma, beta, std::move(r));
}

template <typename T>
Var batchnorm_infer(Tape<T>& tape, Var x, Var gamma, Var beta,
                    const Tensor<T>& running_mean, const Tensor<T>& running_var) {
  BatchNormResult<T> r = ccnn::batchnorm_infer(tape.value(x), tape.value(gamma),
                                               tape.value(beta), running_mean, running_var);
  return detail_push_batchnorm(tape, x, gamma, beta, std::move(r));
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return tape.push(ccnn::relu(tape.value(x)), tape.requires_grad(x),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(x, relu_backward(g, t.value(x)));
                   });
}

template <typename T>
Var maxpool2x2(Tape<T>& tape, Var x) {
  MaxPoolResult<T> r = ccnn::maxpool2x2(tape.value(x));
  return tape.push(std::move(r.output), tape.requires_grad(x),
                   [x, argmax = std::move(r.argmax)](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(x, maxpool2x2_backward(g, std::span(argmax),
                                                         t.value(x).shape()));
                   });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const std::size_t first = tape.value(a).rank() == 4 ? tape.value(a).dim(1)
                                                      : tape.value(a).dim(0);
  const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(ccnn::concat_channels(tape.value(a), tape.value(b)), rg,
                   [a, b, first](Tape<T>& t, const Tensor<T>& g) {
                     auto [ga, gb] = split_channels(g, first);
                     t.accumulate(a, ga);
                     t.accumulate(b, gb);
                   });
}

template <typename T>
Var gwap(Tape<T>& tape, Var x, Var w) {
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w);
  return tape.push(ccnn::gwap(tape.value(x), tape.value(w)), rg,
                   [x, w](Tape<T>& t, const Tensor<T>& g) {
                     auto grads = gwap_backward(g, t.value(x), t.value(w));
                     t.accumulate(x, grads.input);
                     t.accumulate(w, grads.weights);
                   });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  return tape.push(ccnn::global_avg_pool(tape.value(x)), tape.requires_grad(x),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(x, global_avg_pool_backward(g, t.value(x).shape()));
                   });
}

// [B,...] -> [B, prod(...)]; rank-3 feature maps flatten to [1, C*H*W].
template <typename T>
Var flatten(Tape<T>& tape, Var x) {
  const Tensor<T>& v = tape.value(x);
  const std::size_t batch = v.rank() == 4 ? v.dim(0) : 1;
  return tape.push(v.reshaped({batch, v.size() / batch}), tape.requires_grad(x),
                   [x](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(x, g.reshaped(t.value(x).shape()));
                   });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const bool rg = tape.requires_grad(x) || tape.requires_grad(w) ||
                  tape.requires_grad(b);
  return tape.push(ccnn::linear(tape.value(x), tape.value(w), tape.value(b)), rg,
                   [x, w, b](Tape<T>& t, const Tensor<T>& g) {
                     auto grads = linear_backward(g, t.value(x), t.value(w));
                     t.accumulate(x, grads.input);
                     t.accumulate(w, grads.weights);
                     t.accumulate(b, grads.bias);
                   });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, Mode mode, std::mt19937_64& rng) {
  DropoutResult<T> r = ccnn::dropout(tape.value(x), rate, mode, rng);
  return tape.push(std::move(r.output), tape.requires_grad(x),
                   [x, mask = std::move(r.mask)](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(x, dropout_backward(g, std::span<const T>(mask)));
                   });
}

// Mean cross-entropy over the batch; the result is a [1] tensor.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits,
                          std::span<const std::size_t> labels) {
  SoftmaxCrossEntropy<T> r = ccnn::softmax_cross_entropy(tape.value(logits), labels);
  std::vector<std::size_t> saved(labels.begin(), labels.end());
  return tape.push(Tensor<T>({1}, r.loss), tape.requires_grad(logits),
                   [logits, probs = std::move(r.probs), saved = std::move(saved)](
                       Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> d = softmax_cross_entropy_backward(probs, std::span(saved));
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] *= g[0];
                     t.accumulate(logits, d);
                   });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& va = tape.value(a);
  const Tensor<T>& vb = tape.value(b);
  if (va.shape() != vb.shape()) throw DimensionError("add: shape mismatch");
  Tensor<T> y = va;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += vb[i];
  return tape.push(std::move(y), tape.requires_grad(a) || tape.requires_grad(b),
                   [a, b](Tape<T>& t, const Tensor<T>& g) {
                     t.accumulate(a, g);
                     t.accumulate(b, g);
                   });
}

// sum_i x_i * r_i against a constant r; reduces any tensor to a scalar.
template <typename T>
Var dot(Tape<T>& tape, Var x, const Tensor<T>& r) {
  const Tensor<T>& v = tape.value(x);
  if (v.size() != r.size()) throw DimensionError("dot: length mismatch");
  T acc = T(0);
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * r[i];
  return tape.push(Tensor<T>({1}, acc), tape.requires_grad(x),
                   [x, r](Tape<T>& t, const Tensor<T>& g) {
                     Tensor<T> d = r.reshaped(t.value(x).shape());
                     for (std::size_t i = 0; i < d.size(); ++i) d[i] *= g[0];
                     t.accumulate(x, d);
                   });
}

}  // namespace ad
}  // namespace ccnn
