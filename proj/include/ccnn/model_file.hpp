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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccnn/dataset.hpp"
#include "ccnn/network.hpp"
#include "ccnn/quantizer.hpp"

namespace ccnn {

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownEncodingError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr char kModelMagic[4] = {'C', 'C', 'N', 'N'};
inline constexpr std::uint16_t kModelVersion = 1;

// Layout, all integers little-endian:
//   "CCNN" u16 version
//   u32 header length, header JSON {"spec": ..., "quant": "conv=8,..." | null}
//   u32 record count, then per record:
//     u16 name length, name, u8 role, u8 rank, u32 dims[rank],
//     u8 encoding (0 float32, 1 quantized)
//     quantized: u8 bits, f32 scale, codes packed LSB-first as bits-wide
//                two's complement, padded to a whole byte
//     float32:   IEEE-754 binary32 values
//   u32 CRC-32 of every preceding byte
struct ModelFile {
  NetworkSpec spec;
  std::optional<QuantScheme> quant;
  std::vector<EncodedParameter> params;

  // Dequantized float network; throws SpecError if records and spec disagree.
  Network<float> network() const;
};

std::vector<std::uint8_t> serialize_model(const ModelFile& model);
ModelFile parse_model(std::span<const std::uint8_t> bytes);

// Quantizes on the way out when a scheme is given.
ModelFile make_model_file(const Network<float>& net,
                          const std::optional<QuantScheme>& quant = std::nullopt);

void save_model(const std::string& path, const ModelFile& model);
void save_model(const std::string& path, const Network<float>& net,
                const std::optional<QuantScheme>& quant = std::nullopt);
ModelFile load_model(const std::string& path);

// Bytes taken by everything except parameter payloads and scales.
std::size_t model_overhead_bytes(const ModelFile& model);

}  // namespace ccnn
