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

#include "ccnn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ccnn {

const char* to_string(QuantBucket bucket) {
  switch (bucket) {
    case QuantBucket::Conv: return "conv";
    case QuantBucket::Classifier: return "fc";
    case QuantBucket::Gwap: return "gwap";
    case QuantBucket::BnFloat: return "bn";
  }
  return "?";
}

QuantBucket bucket_for(ParamRole role) {
  switch (role) {
    case ParamRole::ConvWeight: return QuantBucket::Conv;
    case ParamRole::LinearWeight:
    case ParamRole::LinearBias: return QuantBucket::Classifier;
    case ParamRole::GwapWeight: return QuantBucket::Gwap;
    case ParamRole::BnGamma:
    case ParamRole::BnBeta:
    case ParamRole::BnMean:
    case ParamRole::BnVar: return QuantBucket::BnFloat;
    case ParamRole::Unassigned: break;
  }
  throw AccountingError("parameter has no storage bucket");
}

namespace {

bool valid_bits(int bits) {
  return bits == 2 || bits == 4 || bits == 8 || bits == 16 || bits == kFloatBits;
}

}  // namespace

QuantScheme QuantScheme::parse(const std::string& text) {
  QuantScheme s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParameterError("bad bit-width entry '" + item + "'");
    const std::string key = item.substr(0, eq);
    int bits = 0;
    try {
      std::size_t used = 0;
      bits = std::stoi(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError("bad bit width in '" + item + "'");
    }
    if (key == "conv") s.conv_bits = bits;
    else if (key == "fc" || key == "classifier") s.classifier_bits = bits;
    else if (key == "gwap" || key == "wap") s.gwap_bits = bits;
    else throw ParameterError("unknown bit-width key '" + key + "'");
  }
  s.validate();
  return s;
}

int QuantScheme::bits_for(QuantBucket bucket) const {
  switch (bucket) {
    case QuantBucket::Conv: return conv_bits;
    case QuantBucket::Classifier: return classifier_bits;
    case QuantBucket::Gwap: return gwap_bits;
    case QuantBucket::BnFloat: return kFloatBits;
  }
  return kFloatBits;
}

void QuantScheme::validate() const {
  for (int b : {conv_bits, classifier_bits, gwap_bits}) {
    if (!valid_bits(b)) {
      throw ParameterError("bit width " + std::to_string(b) +
                           " not in {2,4,8,16} (or 32 for float)");
    }
  }
}

std::string QuantScheme::str() const {
  return "conv=" + std::to_string(conv_bits) + ",fc=" + std::to_string(classifier_bits) +
         ",gwap=" + std::to_string(gwap_bits);
}

QuantizedTensor quantize_uniform(const Tensor<float>& t, int bits) {
  if (t.empty()) throw ParameterError("quantize_uniform: empty tensor");
  if (bits < 2 || bits > 16) throw ParameterError("quantize_uniform: bits must be in [2,16]");
  float max_abs = 0.0f;
  for (float v : t.values()) {
    if (!std::isfinite(v)) throw DataError("quantize_uniform: non-finite value");
    max_abs = std::max(max_abs, std::fabs(v));
  }
  QuantizedTensor q;
  q.shape = t.shape();
  q.bits = bits;
  const std::int32_t qmax = q.max_code();
  q.scale = max_abs > 0.0f ? static_cast<float>(static_cast<double>(max_abs) / qmax) : 1.0f;
  if (!(q.scale > 0.0f)) q.scale = std::numeric_limits<float>::denorm_min();
  q.codes.resize(t.size());
  const double scale = q.scale;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const long c = std::lround(static_cast<double>(t[i]) / scale);
    q.codes[i] = static_cast<std::int32_t>(std::clamp<long>(c, -qmax, qmax));
  }
  return q;
}

Tensor<float> dequantize(const QuantizedTensor& q) {
  if (q.codes.size() != shape_size(q.shape)) {
    throw DimensionError("dequantize: code count does not match shape");
  }
  Tensor<float> t(q.shape);
  const double scale = q.scale;
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    t[i] = static_cast<float>(q.codes[i] * scale);
  }
  return t;
}

void StorageReport::add(QuantBucket bucket, int bits, std::size_t elements,
                        std::size_t tensors) {
  Bucket& b = buckets[bucket];
  b.bits = bits;
  b.elements += elements;
  b.tensors += tensors;
}

std::uint64_t StorageReport::total_bits() const {
  std::uint64_t bits = 0;
  for (const auto& [bucket, b] : buckets) {
    bits += static_cast<std::uint64_t>(b.elements) * static_cast<std::uint64_t>(b.bits);
    if (b.bits != kFloatBits) bits += 32u * static_cast<std::uint64_t>(b.tensors);
  }
  return bits;
}

StorageReport quantized_storage(const Parameters<float>& params, const QuantScheme& scheme) {
  scheme.validate();
  StorageReport report;
  for (const auto& e : params.entries()) {
    const QuantBucket bucket = bucket_for(e.role);
    report.add(bucket, scheme.bits_for(bucket), e.value.size());
  }
  return report;
}

Tensor<float> EncodedParameter::decode() const {
  if (const auto* q = std::get_if<QuantizedTensor>(&payload)) return dequantize(*q);
  return std::get<Tensor<float>>(payload);
}

std::vector<EncodedParameter> encode_parameters(const Parameters<float>& params,
                                                const QuantScheme& scheme) {
  scheme.validate();
  std::vector<EncodedParameter> out;
  out.reserve(params.size());
  for (const auto& e : params.entries()) {
    const int bits = scheme.bits_for(bucket_for(e.role));
    if (bits == kFloatBits) {
      out.push_back({e.name, e.role, e.value});
    } else {
      out.push_back({e.name, e.role, quantize_uniform(e.value, bits)});
    }
  }
  return out;
}

Parameters<float> decode_parameters(const std::vector<EncodedParameter>& encoded) {
  Parameters<float> params;
  for (const auto& e : encoded) params.add(e.name, e.role, e.decode());
  return params;
}

}  // namespace ccnn
