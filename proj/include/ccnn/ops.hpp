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

// Forward and backward kernels for every primitive the network composes.
// Feature maps are [B,C,H,W]; rank-3 [C,H,W] inputs are accepted wherever a
// batch is and treated as B = 1. Kernels are pure functions of their inputs,
// except batchnorm_train which updates the running statistics it is handed.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "ccnn/tensor.hpp"

namespace ccnn {

enum class Padding { Same, Valid };
enum class Mode { Train, Infer };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weights,
                           std::size_t stride, Padding padding);

// Cross-correlation with zero padding and no bias. weights: [O,C,kh,kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 std::size_t stride, Padding padding);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
};

// grad_input is left empty when need_input_grad is false.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weights, std::size_t stride,
                             Padding padding, bool need_input_grad = true);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

// Disjoint 2x2 windows, stride 2. Ties go to the lowest linear index.
template <typename T>
MaxPoolResult<T> maxpool2x2(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out,
                              std::span<const std::size_t> argmax,
                              const Shape& input_shape);

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::Infer;
  Tensor<T> normalized;     // x-hat
  std::vector<T> inv_std;   // per channel
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormCache<T> cache;
};

// Normalizes with batch statistics. When running_mean/running_var are
// non-null they are blended toward the batch statistics:
//   running = momentum * running + (1 - momentum) * batch
// with the unbiased batch variance.
template <typename T>
BatchNormResult<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta,
                                   std::type_identity_t<Tensor<T>>* running_mean,
                                   std::type_identity_t<Tensor<T>>* running_var,
                                   double momentum = kBatchNormMomentum,
                                   double eps = kBatchNormEpsilon);

template <typename T>
BatchNormResult<T> batchnorm_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta,
                                   const Tensor<T>& running_mean,
                                   const Tensor<T>& running_var,
                                   double eps = kBatchNormEpsilon);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out,
                                     const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input);

template <typename T>
std::vector<T> softmax(std::span<const T> logits);

// Row-wise softmax over [B,K].
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t label);

template <typename T>
struct SoftmaxCrossEntropy {
  T loss;            // mean over the batch
  Tensor<T> probs;   // [B,K]
};

// Computed through log-sum-exp so the loss stays finite for saturated logits.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::size_t> labels);

// d(mean loss)/d(logits) = (probs - one_hot) / B.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs,
                                         std::span<const std::size_t> labels);

// Uniform double in [0,1) with 53 random bits; independent of the standard
// library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  std::vector<T> mask;  // 0 or 1/(1-rate); empty in infer mode
};

// Inverted dropout. Identity in infer mode or when rate == 0.
template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Mode mode,
                         std::mt19937_64& rng);

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, std::span<const T> mask);

// x: [B,in], w: [in,out], b: [out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                               const Tensor<T>& w);

// Per-channel weighted spatial sum: out[b,c] = sum_{h,w} w[c,h,w] * x[b,c,h,w].
template <typename T>
Tensor<T> gwap(const Tensor<T>& x, const Tensor<T>& w);

template <typename T>
struct GwapGrads {
  Tensor<T> input;
  Tensor<T> weights;
};

template <typename T>
GwapGrads<T> gwap_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                           const Tensor<T>& w);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out,
                                   const Shape& input_shape);

// Channel concatenation of two [B,C,H,W] maps with equal B, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x,
                                               std::size_t first_channels);

// Index of the maximum; ties break to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

}  // namespace ccnn
