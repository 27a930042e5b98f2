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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ccnn/errors.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

// Reader failures. All derive from DataError so callers can catch one type.
class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class CorruptRecordError : public DataError {
 public:
  CorruptRecordError(const std::string& what, std::uint64_t offset)
      : DataError(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Grayscale image [1, H, W] with ink high, background zero, values in [0, 1].
struct Sample {
  Tensor<float> image;
  std::size_t label = 0;
  std::string source_id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  // Throws DataError if a label is out of range or shapes disagree.
  void validate() const;

  // Images stacked into [B, 1, H, W] in the given order.
  Tensor<float> images(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> labels(std::span<const std::size_t> indices) const;
};

// First `holdout_per_class` samples of each class go to the second half.
std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t holdout_per_class);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Pixel bytes scaled by 1/255. num_classes is max label + 1.
Dataset read_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of read_idx; pixels are rounded to the nearest byte.
void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path);

/// One raw GNT record: 0 is black ink, 255 is background.
struct GntRecord {
  std::uint16_t tag = 0;  // two code bytes, first byte high
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> bitmap;  // row-major, height rows of width bytes
};

inline constexpr std::uint32_t kGntHeaderBytes = 10;
inline constexpr std::uint32_t kGntMaxRecordBytes = 64u << 20;

std::vector<GntRecord> read_gnt_records(const std::string& path);
std::vector<GntRecord> parse_gnt_records(std::span<const std::uint8_t> bytes);
void write_gnt(const std::string& path, const std::vector<GntRecord>& records);

// Tag codes in order of first appearance mapped to 0, 1, 2, ...
std::map<std::uint16_t, std::size_t> gnt_class_map(const std::vector<GntRecord>& records);

struct GntLoad {
  Dataset data;
  std::size_t skipped = 0;  // records whose tag is not in the class map
};

// Inverts, pads to square and bilinearly resamples each bitmap to size x size.
GntLoad read_gnt(const std::string& path, const std::map<std::uint16_t, std::size_t>& class_map,
                 std::size_t size = 64);
Sample gnt_sample(const GntRecord& record, std::size_t label, std::size_t size = 64);

// Centered zero padding of [H, W] to the larger side.
Tensor<float> pad_to_square(const Tensor<float>& image);

// Half-pixel-center bilinear resampling of [H, W] with edge clamping.
Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h, std::size_t out_w);

inline constexpr std::size_t kGlyphAlphabet = 64;

struct SynthOptions {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 200;
  double noise = 0.05;   // std dev of additive pixel noise
  double jitter = 1.0;   // 1 gives +-10% scale, +-10 deg rotation, +-4 px shift
  std::uint64_t seed = 0;
  std::size_t size = 64;
};

// Rendered stroke glyphs, class-major order. Seeded-deterministic.
Dataset synth_glyphs(const SynthOptions& options);

}  // namespace ccnn
