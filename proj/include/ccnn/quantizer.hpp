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

// Weight-only fixed-point quantization: symmetric per-tensor scale, no zero
// point, codes in [-(2^(b-1) - 1), 2^(b-1) - 1]. Conv weights, classifier
// (linear) layers and GWAP kernels each get their own bit width; batch-norm
// tensors always stay float32.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ccnn/architecture.hpp"
#include "ccnn/parameters.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

class AccountingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class QuantBucket { Conv, Classifier, Gwap, BnFloat };

const char* to_string(QuantBucket bucket);

// Throws AccountingError for ParamRole::Unassigned.
QuantBucket bucket_for(ParamRole role);

inline constexpr int kFloatBits = 32;

struct QuantScheme {
  int conv_bits = 8;
  int classifier_bits = 4;
  int gwap_bits = 8;

  // 32 bits everywhere: every tensor stored as float32.
  static QuantScheme float32() { return {kFloatBits, kFloatBits, kFloatBits}; }

  // "conv=8,fc=4,gwap=8"; omitted keys keep their defaults.
  static QuantScheme parse(const std::string& text);

  int bits_for(QuantBucket bucket) const;
  void validate() const;
  std::string str() const;

  friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

struct QuantizedTensor {
  Shape shape;
  int bits = 8;
  float scale = 1.0f;
  std::vector<std::int32_t> codes;

  std::int32_t max_code() const { return (std::int32_t{1} << (bits - 1)) - 1; }
  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

// scale = max|t| / (2^(bits-1) - 1); an all-zero tensor gets scale 1.
QuantizedTensor quantize_uniform(const Tensor<float>& t, int bits);

Tensor<float> dequantize(const QuantizedTensor& q);

/// Storage accounting in bits per bucket.
struct StorageReport {
  struct Bucket {
    std::size_t elements = 0;
    std::size_t tensors = 0;
    int bits = kFloatBits;
  };
  std::map<QuantBucket, Bucket> buckets;

  void add(QuantBucket bucket, int bits, std::size_t elements, std::size_t tensors = 1);

  // Payload bits plus 32 bits per scale for every quantized tensor.
  std::uint64_t total_bits() const;
  double bytes() const { return static_cast<double>(total_bits()) / 8.0; }
};

StorageReport quantized_storage(const Parameters<float>& params, const QuantScheme& scheme);

/// One parameter as stored: plain float32 or quantized codes.
struct EncodedParameter {
  std::string name;
  ParamRole role = ParamRole::Unassigned;
  std::variant<Tensor<float>, QuantizedTensor> payload;

  bool quantized() const { return std::holds_alternative<QuantizedTensor>(payload); }
  Tensor<float> decode() const;
};

std::vector<EncodedParameter> encode_parameters(const Parameters<float>& params,
                                                const QuantScheme& scheme);

Parameters<float> decode_parameters(const std::vector<EncodedParameter>& encoded);

}  // namespace ccnn
