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

#include "ccnn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ccnn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct Nchw {
  std::size_t b, c, h, w;
  std::size_t plane() const { return h * w; }
  std::size_t sample() const { return c * h * w; }
};

Nchw as_nchw(const Shape& s, const char* op) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " +
                       shape_str(s));
}

Shape with_layout(const Shape& like, std::size_t b, std::size_t c, std::size_t h,
                  std::size_t w) {
  if (like.size() == 3) return {c, h, w};
  return {b, c, h, w};
}


template <typename T>
void require_channel_vector(const Tensor<T>& v, std::size_t channels,
                            const char* what) {
  if (v.size() != channels) {
    throw DimensionError(std::string("batchnorm: ") + what + " has " +
                         std::to_string(v.size()) + " entries for " +
                         std::to_string(channels) + " channels");
  }
}

// col rows are (c, ky, kx); columns are output positions (oy, ox).
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* col) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad_top);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad_left);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* img) {
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = col + ((c * g.kernel_h + ky) * g.kernel_w + kx) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad_left);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad_top == 0 &&
         g.pad_left == 0;
}

}  // namespace

ConvGeometry conv_geometry(const Shape& input, const Shape& weights,
                           std::size_t stride, Padding padding) {
  const Nchw in = as_nchw(input, "conv2d");
  if (weights.size() != 4) {
    throw DimensionError("conv2d: weights must be [O,C,kh,kw], got " +
                         shape_str(weights));
  }
  if (weights[1] != in.c) {
    throw DimensionError("conv2d: input has " + std::to_string(in.c) +
                         " channels but kernel expects " + std::to_string(weights[1]));
  }
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");

  ConvGeometry g;
  g.batch = in.b;
  g.in_channels = in.c;
  g.in_h = in.h;
  g.in_w = in.w;
  g.out_channels = weights[0];
  g.kernel_h = weights[2];
  g.kernel_w = weights[3];
  g.stride = stride;
  if (padding == Padding::Same) {
    g.out_h = (in.h + stride - 1) / stride;
    g.out_w = (in.w + stride - 1) / stride;
    const long pad_h = static_cast<long>((g.out_h - 1) * stride + g.kernel_h) -
                       static_cast<long>(in.h);
    const long pad_w = static_cast<long>((g.out_w - 1) * stride + g.kernel_w) -
                       static_cast<long>(in.w);
    g.pad_top = static_cast<std::size_t>(std::max(pad_h, 0L)) / 2;
    g.pad_left = static_cast<std::size_t>(std::max(pad_w, 0L)) / 2;
  } else {
    if (g.kernel_h > in.h || g.kernel_w > in.w) {
      throw DimensionError("conv2d: kernel larger than unpadded input " +
                           shape_str(input));
    }
    g.out_h = (in.h - g.kernel_h) / stride + 1;
    g.out_w = (in.w - g.kernel_w) / stride + 1;
  }
  return g;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 std::size_t stride, Padding padding) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), stride, padding);
  const std::size_t ckk = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_hw = g.in_h * g.in_w;
  const std::size_t out_hw = g.out_h * g.out_w;

  Tensor<T> out(with_layout(input.shape(), g.batch, g.out_channels, g.out_h, g.out_w));
  ConstMapMat<T> w(weights.raw(), static_cast<Eigen::Index>(g.out_channels),
                   static_cast<Eigen::Index>(ckk));
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : ckk * out_hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* src = input.raw() + b * g.in_channels * in_hw;
    if (!pointwise) im2col(src, g, col.data());
    ConstMapMat<T> cols(pointwise ? src : col.data(), static_cast<Eigen::Index>(ckk),
                        static_cast<Eigen::Index>(out_hw));
    MapMat<T> dst(out.raw() + b * g.out_channels * out_hw,
                  static_cast<Eigen::Index>(g.out_channels),
                  static_cast<Eigen::Index>(out_hw));
    dst.noalias() = w * cols;
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weights, std::size_t stride,
                             Padding padding, bool need_input_grad) {
  if (input.empty() || weights.empty()) {
    throw UsageError("conv2d_backward: forward input or weights were not saved");
  }
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), stride, padding);
  const Shape expected =
      with_layout(input.shape(), g.batch, g.out_channels, g.out_h, g.out_w);
  if (grad_out.shape() != expected) {
    throw DimensionError("conv2d_backward: grad_out " + shape_str(grad_out.shape()) +
                         " does not match forward output " + shape_str(expected));
  }
  const std::size_t ckk = g.in_channels * g.kernel_h * g.kernel_w;
  const std::size_t in_hw = g.in_h * g.in_w;
  const std::size_t out_hw = g.out_h * g.out_w;
  const auto O = static_cast<Eigen::Index>(g.out_channels);
  const auto K = static_cast<Eigen::Index>(ckk);
  const auto P = static_cast<Eigen::Index>(out_hw);

  ConvGrads<T> grads;
  grads.weights = Tensor<T>(weights.shape());
  if (need_input_grad) grads.input = Tensor<T>(input.shape());

  ConstMapMat<T> w(weights.raw(), O, K);
  MapMat<T> gw(grads.weights.raw(), O, K);
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : ckk * out_hw);
  std::vector<T> gcol(pointwise || !need_input_grad ? 0 : ckk * out_hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* src = input.raw() + b * g.in_channels * in_hw;
    if (!pointwise) im2col(src, g, col.data());
    ConstMapMat<T> cols(pointwise ? src : col.data(), K, P);
    ConstMapMat<T> go(grad_out.raw() + b * g.out_channels * out_hw, O, P);
    gw.noalias() += go * cols.transpose();
    if (!need_input_grad) continue;
    T* gin = grads.input.raw() + b * g.in_channels * in_hw;
    if (pointwise) {
      MapMat<T> gi(gin, K, P);
      gi.noalias() = w.transpose() * go;
    } else {
      MapMat<T> gc(gcol.data(), K, P);
      gc.noalias() = w.transpose() * go;
      col2im(gcol.data(), g, gin);
    }
  }
  return grads;
}

template <typename T>
MaxPoolResult<T> maxpool2x2(const Tensor<T>& input) {
  const Nchw in = as_nchw(input.shape(), "maxpool2x2");
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw DimensionError("maxpool2x2: spatial dims must be even, got " +
                         shape_str(input.shape()));
  }
  const std::size_t oh = in.h / 2, ow = in.w / 2;
  MaxPoolResult<T> r;
  r.output = Tensor<T>(with_layout(input.shape(), in.b, in.c, oh, ow));
  r.argmax.resize(r.output.size());
  const T* x = input.raw();
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < in.b * in.c; ++bc) {
    const std::size_t base = bc * in.plane();
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t i00 = base + (2 * y) * in.w + 2 * xx;
        // Scan order is increasing linear index; strict > keeps the first max.
        const std::size_t cand[4] = {i00, i00 + 1, i00 + in.w, i00 + in.w + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k) {
          if (x[cand[k]] > x[best]) best = cand[k];
        }
        r.output[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out,
                              std::span<const std::size_t> argmax,
                              const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw UsageError("maxpool2x2_backward: argmax routing does not match grad_out");
  }
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= g.size()) {
      throw DimensionError("maxpool2x2_backward: argmax index out of range");
    }
    g[argmax[i]] += grad_out[i];
  }
  return g;
}

template <typename T>
BatchNormResult<T> batchnorm_train(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta,
                                   std::type_identity_t<Tensor<T>>* running_mean,
                                   std::type_identity_t<Tensor<T>>* running_var, double momentum,
                                   double eps) {
  const Nchw in = as_nchw(x.shape(), "batchnorm");
  require_channel_vector(gamma, in.c, "gamma");
  require_channel_vector(beta, in.c, "beta");
  if (running_mean) require_channel_vector(*running_mean, in.c, "running mean");
  if (running_var) require_channel_vector(*running_var, in.c, "running variance");

  const std::size_t count = in.b * in.plane();
  BatchNormResult<T> r;
  r.output = Tensor<T>(x.shape());
  r.cache.mode = Mode::Train;
  r.cache.normalized = Tensor<T>(x.shape());
  r.cache.inv_std.resize(in.c);
  for (std::size_t c = 0; c < in.c; ++c) {
    // Accumulate in double regardless of T.
    double sum = 0.0;
    for (std::size_t b = 0; b < in.b; ++b) {
      const T* p = x.raw() + b * in.sample() + c * in.plane();
      for (std::size_t i = 0; i < in.plane(); ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t b = 0; b < in.b; ++b) {
      const T* p = x.raw() + b * in.sample() + c * in.plane();
      for (std::size_t i = 0; i < in.plane(); ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    r.cache.inv_std[c] = static_cast<T>(inv_std);
    const double gc = gamma[c], bc = beta[c];
    for (std::size_t b = 0; b < in.b; ++b) {
      const std::size_t off = b * in.sample() + c * in.plane();
      const T* p = x.raw() + off;
      T* xh = r.cache.normalized.raw() + off;
      T* y = r.output.raw() + off;
      for (std::size_t i = 0; i < in.plane(); ++i) {
        const double n = (p[i] - mean) * inv_std;
        xh[i] = static_cast<T>(n);
        y[i] = static_cast<T>(gc * n + bc);
      }
    }
    if (running_mean && running_var) {
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      (*running_mean)[c] =
          static_cast<T>(momentum * (*running_mean)[c] + (1.0 - momentum) * mean);
      (*running_var)[c] =
          static_cast<T>(momentum * (*running_var)[c] + (1.0 - momentum) * unbiased);
    }
  }
  return r;
}

template <typename T>
BatchNormResult<T> batchnorm_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                                   const Tensor<T>& beta,
                                   const Tensor<T>& running_mean,
                                   const Tensor<T>& running_var, double eps) {
  if (running_mean.empty() || running_var.empty()) {
    throw UsageError("batchnorm: inference requested before running statistics exist");
  }
  const Nchw in = as_nchw(x.shape(), "batchnorm");
  require_channel_vector(gamma, in.c, "gamma");
  require_channel_vector(beta, in.c, "beta");
  require_channel_vector(running_mean, in.c, "running mean");
  require_channel_vector(running_var, in.c, "running variance");

  BatchNormResult<T> r;
  r.output = Tensor<T>(x.shape());
  r.cache.mode = Mode::Infer;
  r.cache.normalized = Tensor<T>(x.shape());
  r.cache.inv_std.resize(in.c);
  for (std::size_t c = 0; c < in.c; ++c) {
    if (!(running_var[c] > T(0))) {
      throw DataError("batchnorm: running variance must be strictly positive");
    }
    const T mean = running_mean[c];
    const T inv_std = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    r.cache.inv_std[c] = inv_std;
    const T gc = gamma[c], bc = beta[c];
    for (std::size_t b = 0; b < in.b; ++b) {
      const std::size_t off = b * in.sample() + c * in.plane();
      const T* p = x.raw() + off;
      T* xh = r.cache.normalized.raw() + off;
      T* y = r.output.raw() + off;
      for (std::size_t i = 0; i < in.plane(); ++i) {
        const T n = (p[i] - mean) * inv_std;
        xh[i] = n;
        y[i] = gc * n + bc;
      }
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out,
                                     const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma) {
  if (cache.normalized.empty()) {
    throw UsageError("batchnorm_backward: no saved forward state");
  }
  if (grad_out.shape() != cache.normalized.shape()) {
    throw DimensionError("batchnorm_backward: grad_out shape mismatch");
  }
  const Nchw in = as_nchw(grad_out.shape(), "batchnorm");
  const double count = static_cast<double>(in.b * in.plane());
  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({in.c}), Tensor<T>({in.c})};
  for (std::size_t c = 0; c < in.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < in.b; ++b) {
      const std::size_t off = b * in.sample() + c * in.plane();
      const T* dy = grad_out.raw() + off;
      const T* xh = cache.normalized.raw() + off;
      for (std::size_t i = 0; i < in.plane(); ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    g.beta[c] = static_cast<T>(sum_dy);
    const double scale = static_cast<double>(gamma[c]) * cache.inv_std[c];
    for (std::size_t b = 0; b < in.b; ++b) {
      const std::size_t off = b * in.sample() + c * in.plane();
      const T* dy = grad_out.raw() + off;
      const T* xh = cache.normalized.raw() + off;
      T* dx = g.input.raw() + off;
      if (cache.mode == Mode::Train) {
        for (std::size_t i = 0; i < in.plane(); ++i) {
          dx[i] = static_cast<T>(scale * (dy[i] - sum_dy / count -
                                          xh[i] * sum_dy_xhat / count));
        }
      } else {
        for (std::size_t i = 0; i < in.plane(); ++i) {
          dx[i] = static_cast<T>(scale * dy[i]);
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  if (grad_out.shape() != input.shape()) {
    throw DimensionError("relu_backward: shape mismatch");
  }
  Tensor<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  }
  return g;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty logit vector");
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = static_cast<T>(std::exp(static_cast<double>(logits[i] - mx)));
    sum += p[i];
  }
  for (T& v : p) v = static_cast<T>(v / sum);
  return p;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax_rows: expected [B,K], got " + shape_str(logits.shape()));
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    auto p = softmax<T>(logits.data().subspan(r * k, k));
    std::copy(p.begin(), p.end(), out.raw() + r * k);
  }
  return out;
}

template <typename T>
T cross_entropy(std::span<const T> probs, std::size_t label) {
  if (probs.empty()) throw DimensionError("cross_entropy: empty probability vector");
  if (label >= probs.size()) throw ParameterError("cross_entropy: label out of range");
  return static_cast<T>(-std::log(static_cast<double>(probs[label])));
}

template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::size_t> labels) {
  if (logits.rank() != 2) {
    throw DimensionError("softmax_cross_entropy: expected [B,K] logits");
  }
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: label count does not match batch");
  }
  SoftmaxCrossEntropy<T> r{T(0), Tensor<T>(logits.shape())};
  double total = 0.0;
  for (std::size_t row = 0; row < rows; ++row) {
    if (labels[row] >= k) throw ParameterError("softmax_cross_entropy: label out of range");
    const T* z = logits.raw() + row * k;
    const double mx = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(z[i] - mx);
    const double log_sum = std::log(sum) + mx;
    total += log_sum - z[labels[row]];
    for (std::size_t i = 0; i < k; ++i) {
      r.probs[row * k + i] = static_cast<T>(std::exp(z[i] - log_sum));
    }
  }
  r.loss = static_cast<T>(total / static_cast<double>(rows));
  return r;
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs,
                                         std::span<const std::size_t> labels) {
  const std::size_t rows = probs.dim(0), k = probs.dim(1);
  Tensor<T> g = probs;
  const T inv = static_cast<T>(1.0 / static_cast<double>(rows));
  for (std::size_t row = 0; row < rows; ++row) {
    g[row * k + labels[row]] -= T(1);
    for (std::size_t i = 0; i < k; ++i) g[row * k + i] *= inv;
  }
  return g;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& x, double rate, Mode mode,
                         std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }
  DropoutResult<T> r;
  if (mode == Mode::Infer || rate == 0.0) {
    r.output = x;
    return r;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  r.output = Tensor<T>(x.shape());
  r.mask.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = uniform01(rng) < rate ? T(0) : keep_scale;
    r.output[i] = x[i] * r.mask[i];
  }
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, std::span<const T> mask) {
  if (mask.empty()) return grad_out;
  if (mask.size() != grad_out.size()) {
    throw DimensionError("dropout_backward: mask does not match grad_out");
  }
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * mask[i];
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: cannot apply " + shape_str(w.shape()) + " to " +
                         shape_str(x.shape()));
  }
  if (b.size() != w.dim(1)) throw DimensionError("linear: bias length mismatch");
  const auto in = static_cast<Eigen::Index>(w.dim(0));
  const auto out_n = static_cast<Eigen::Index>(w.dim(1));
  Tensor<T> y({x.dim(0), w.dim(1)});
  ConstMapMat<T> wm(w.raw(), in, out_n);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.raw(), out_n);
  // One row at a time so each output's reduction order is independent of B.
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> xr(x.raw() + r * w.dim(0), in);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> yr(y.raw() + r * w.dim(1), out_n);
    yr.noalias() = xr * wm;
    yr += bias;
  }
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                               const Tensor<T>& w) {
  if (x.empty()) throw UsageError("linear_backward: no saved forward input");
  if (grad_out.rank() != 2 || grad_out.dim(0) != x.dim(0) || grad_out.dim(1) != w.dim(1)) {
    throw DimensionError("linear_backward: grad_out shape mismatch");
  }
  const auto B = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(w.dim(0));
  const auto out_n = static_cast<Eigen::Index>(w.dim(1));
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape()), Tensor<T>({w.dim(1)})};
  ConstMapMat<T> xm(x.raw(), B, in);
  ConstMapMat<T> go(grad_out.raw(), B, out_n);
  ConstMapMat<T> wm(w.raw(), in, out_n);
  MapMat<T>(g.input.raw(), B, in).noalias() = go * wm.transpose();
  MapMat<T>(g.weights.raw(), in, out_n).noalias() = xm.transpose() * go;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g.bias.raw(), out_n) =
      go.colwise().sum();
  return g;
}

template <typename T>
Tensor<T> gwap(const Tensor<T>& x, const Tensor<T>& w) {
  const Nchw in = as_nchw(x.shape(), "gwap");
  if (w.shape() != Shape{in.c, in.h, in.w}) {
    throw DimensionError("gwap: weight " + shape_str(w.shape()) +
                         " does not match feature map " + shape_str(x.shape()));
  }
  Tensor<T> y({in.b, in.c});
  for (std::size_t b = 0; b < in.b; ++b) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T* xp = x.raw() + b * in.sample() + c * in.plane();
      const T* wp = w.raw() + c * in.plane();
      T acc = T(0);
      for (std::size_t i = 0; i < in.plane(); ++i) acc += wp[i] * xp[i];
      y[b * in.c + c] = acc;
    }
  }
  return y;
}

template <typename T>
GwapGrads<T> gwap_backward(const Tensor<T>& grad_out, const Tensor<T>& x,
                           const Tensor<T>& w) {
  if (x.empty()) throw UsageError("gwap_backward: no saved forward input");
  const Nchw in = as_nchw(x.shape(), "gwap");
  if (grad_out.shape() != Shape{in.b, in.c}) {
    throw DimensionError("gwap_backward: grad_out shape mismatch");
  }
  GwapGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(w.shape())};
  for (std::size_t b = 0; b < in.b; ++b) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const T go = grad_out[b * in.c + c];
      const std::size_t off = b * in.sample() + c * in.plane();
      const T* xp = x.raw() + off;
      const T* wp = w.raw() + c * in.plane();
      T* gx = g.input.raw() + off;
      T* gw = g.weights.raw() + c * in.plane();
      for (std::size_t i = 0; i < in.plane(); ++i) {
        gx[i] = go * wp[i];
        gw[i] += go * xp[i];
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Nchw in = as_nchw(x.shape(), "global_avg_pool");
  Tensor<T> y({in.b, in.c});
  const T inv = static_cast<T>(1.0 / static_cast<double>(in.plane()));
  for (std::size_t bc = 0; bc < in.b * in.c; ++bc) {
    const T* p = x.raw() + bc * in.plane();
    T acc = T(0);
    for (std::size_t i = 0; i < in.plane(); ++i) acc += inv * p[i];
    y[bc] = acc;
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const Shape& input_shape) {
  const Nchw in = as_nchw(input_shape, "global_avg_pool");
  if (grad_out.size() != in.b * in.c) {
    throw DimensionError("global_avg_pool_backward: grad_out shape mismatch");
  }
  Tensor<T> g(input_shape);
  const T inv = static_cast<T>(1.0 / static_cast<double>(in.plane()));
  for (std::size_t bc = 0; bc < in.b * in.c; ++bc) {
    std::fill(g.raw() + bc * in.plane(), g.raw() + (bc + 1) * in.plane(),
              grad_out[bc] * inv);
  }
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Nchw na = as_nchw(a.shape(), "concat_channels");
  const Nchw nb = as_nchw(b.shape(), "concat_channels");
  if (a.rank() != b.rank() || na.b != nb.b || na.h != nb.h || na.w != nb.w) {
    throw DimensionError("concat_channels: incompatible " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  Tensor<T> y(with_layout(a.shape(), na.b, na.c + nb.c, na.h, na.w));
  T* dst = y.raw();
  for (std::size_t s = 0; s < na.b; ++s) {
    dst = std::copy(a.raw() + s * na.sample(), a.raw() + (s + 1) * na.sample(), dst);
    dst = std::copy(b.raw() + s * nb.sample(), b.raw() + (s + 1) * nb.sample(), dst);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x,
                                               std::size_t first_channels) {
  const Nchw n = as_nchw(x.shape(), "split_channels");
  if (first_channels == 0 || first_channels >= n.c) {
    throw DimensionError("split_channels: split point out of range");
  }
  const std::size_t second = n.c - first_channels;
  Tensor<T> a(with_layout(x.shape(), n.b, first_channels, n.h, n.w));
  Tensor<T> b(with_layout(x.shape(), n.b, second, n.h, n.w));
  const std::size_t la = first_channels * n.plane(), lb = second * n.plane();
  for (std::size_t s = 0; s < n.b; ++s) {
    const T* src = x.raw() + s * n.sample();
    std::copy(src, src + la, a.raw() + s * la);
    std::copy(src + la, src + la + lb, b.raw() + s * lb);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  if (values.empty()) throw DimensionError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

#define CCNN_INSTANTIATE_OPS(T)                                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t,      \
                            Padding);                                              \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,       \
                                        const Tensor<T>&, std::size_t, Padding,   \
                                        bool);                                     \
  template MaxPoolResult<T> maxpool2x2(const Tensor<T>&);                          \
  template Tensor<T> maxpool2x2_backward(const Tensor<T>&,                         \
                                         std::span<const std::size_t>,             \
                                         const Shape&);                            \
  template BatchNormResult<T> batchnorm_train(const Tensor<T>&, const Tensor<T>&, \
                                              const Tensor<T>&, Tensor<T>*,        \
                                              Tensor<T>*, double, double);         \
  template BatchNormResult<T> batchnorm_infer(const Tensor<T>&, const Tensor<T>&, \
                                              const Tensor<T>&, const Tensor<T>&,  \
                                              const Tensor<T>&, double);           \
  template BatchNormGrads<T> batchnorm_backward(const Tensor<T>&,                 \
                                                const BatchNormCache<T>&,          \
                                                const Tensor<T>&);                 \
  template Tensor<T> relu(const Tensor<T>&);                                       \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);            \
  template std::vector<T> softmax(std::span<const T>);                             \
  template Tensor<T> softmax_rows(const Tensor<T>&);                               \
  template T cross_entropy(std::span<const T>, std::size_t);                       \
  template SoftmaxCrossEntropy<T> softmax_cross_entropy(                           \
      const Tensor<T>&, std::span<const std::size_t>);                             \
  template Tensor<T> softmax_cross_entropy_backward(const Tensor<T>&,              \
                                                    std::span<const std::size_t>); \
  template DropoutResult<T> dropout(const Tensor<T>&, double, Mode,                \
                                    std::mt19937_64&);                             \
  template Tensor<T> dropout_backward(const Tensor<T>&, std::span<const T>);       \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&,      \
                                          const Tensor<T>&);                       \
  template Tensor<T> gwap(const Tensor<T>&, const Tensor<T>&);                     \
  template GwapGrads<T> gwap_backward(const Tensor<T>&, const Tensor<T>&,          \
                                      const Tensor<T>&);                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                            \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Shape&);     \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);          \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&,        \
                                                          std::size_t);            \
  template std::size_t argmax(std::span<const T>);

CCNN_INSTANTIATE_OPS(float)
CCNN_INSTANTIATE_OPS(double)

#undef CCNN_INSTANTIATE_OPS

}  // namespace ccnn
