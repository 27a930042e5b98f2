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


#include "ccnn/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>

#include "ccnn/ops.hpp"

namespace ccnn {
namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

std::uint32_t load_be32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3];
}

std::uint32_t load_le32(const std::uint8_t* p) {
  return std::uint32_t{p[3]} << 24 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[1]} << 8 | p[0];
}

std::uint16_t load_le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void store_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void store_le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint8_t to_byte(float v) {
  const long b = std::lround(static_cast<double>(v) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(b, 0L, 255L));
}

}  // namespace

void Dataset::validate() const {
  if (samples.empty()) return;
  const Shape& shape = samples.front().image.shape();
  if (shape.size() != 3 || shape[0] != 1) {
    throw DataError("sample images must be [1, H, W], got " + shape_str(shape));
  }
  for (const Sample& s : samples) {
    if (s.image.shape() != shape) throw DataError("inconsistent image shapes in dataset");
    if (s.label >= num_classes) {
      throw DataError("label " + std::to_string(s.label) + " out of range for " +
                      std::to_string(num_classes) + " classes");
    }
    for (float v : s.image.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel outside [0, 1] in " + s.source_id);
    }
  }
}

Tensor<float> Dataset::images(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ParameterError("empty batch");
  const Shape& shape = samples.at(indices[0]).image.shape();
  Tensor<float> out({indices.size(), shape[0], shape[1], shape[2]});
  const std::size_t n = shape_size(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor<float>& img = samples.at(indices[i]).image;
    if (img.shape() != shape) throw DimensionError("batch images differ in shape");
    std::copy(img.raw(), img.raw() + n, out.raw() + i * n);
  }
  return out;
}

std::vector<std::size_t> Dataset::labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(samples.at(i).label);
  return out;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& data, std::size_t holdout_per_class) {
  std::pair<Dataset, Dataset> out;
  out.first.num_classes = out.second.num_classes = data.num_classes;
  std::vector<std::size_t> taken(data.num_classes, 0);
  for (const Sample& s : data.samples) {
    if (s.label >= data.num_classes) throw DataError("label out of range");
    if (taken[s.label] < holdout_per_class) {
      ++taken[s.label];
      out.second.samples.push_back(s);
    } else {
      out.first.samples.push_back(s);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX

Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lbl = read_bytes(labels_path);

  if (img.size() < 4) throw TruncatedError(images_path + ": missing IDX header");
  if (load_be32(img.data()) != kIdxImageMagic) {
    throw BadMagicError(images_path + ": not an IDX image file (magic 0x00000803)");
  }
  if (img.size() < 16) throw TruncatedError(images_path + ": short IDX header");
  const std::uint64_t n = load_be32(img.data() + 4);
  const std::uint64_t h = load_be32(img.data() + 8);
  const std::uint64_t w = load_be32(img.data() + 12);
  if (n > 0 && (h == 0 || w == 0)) throw DataError(images_path + ": zero image dimension");
  const std::uint64_t payload = img.size() - 16;
  const std::uint64_t plane = h * w;  // both < 2^32, no overflow
  if (n > 0 && payload / plane < n) {
    throw TruncatedError(images_path + ": payload holds " + std::to_string(payload / plane) +
                         " images, header declares " + std::to_string(n));
  }
  if (payload != n * plane) throw DataError(images_path + ": trailing bytes after payload");

  if (lbl.size() < 4) throw TruncatedError(labels_path + ": missing IDX header");
  if (load_be32(lbl.data()) != kIdxLabelMagic) {
    throw BadMagicError(labels_path + ": not an IDX label file (magic 0x00000801)");
  }
  if (lbl.size() < 8) throw TruncatedError(labels_path + ": short IDX header");
  const std::uint64_t declared = load_be32(lbl.data() + 4);
  const std::uint64_t available = lbl.size() - 8;
  if (declared != n || available != n) {
    throw CountMismatchError(labels_path + ": " + std::to_string(std::min(declared, available)) +
                             " labels for " + std::to_string(n) + " images");
  }

  Dataset data;
  data.samples.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Sample s;
    s.image = Tensor<float>({1, h, w});
    const std::uint8_t* p = img.data() + 16 + i * plane;
    for (std::uint64_t k = 0; k < plane; ++k) s.image[k] = static_cast<float>(p[k]) / 255.0f;
    s.label = lbl[8 + i];
    s.source_id = images_path + "#" + std::to_string(i);
    data.num_classes = std::max(data.num_classes, s.label + 1);
    data.samples.push_back(std::move(s));
  }
  return data;
}

void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path) {
  data.validate();
  std::size_t h = 0, w = 0;
  if (!data.empty()) {
    h = data.samples[0].image.dim(1);
    w = data.samples[0].image.dim(2);
  }
  if (h > std::numeric_limits<std::uint32_t>::max() ||
      w > std::numeric_limits<std::uint32_t>::max() ||
      data.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError("dataset too large for IDX");
  }
  std::vector<std::uint8_t> img, lbl;
  store_be32(img, kIdxImageMagic);
  store_be32(img, static_cast<std::uint32_t>(data.size()));
  store_be32(img, static_cast<std::uint32_t>(h));
  store_be32(img, static_cast<std::uint32_t>(w));
  store_be32(lbl, kIdxLabelMagic);
  store_be32(lbl, static_cast<std::uint32_t>(data.size()));
  img.reserve(16 + data.size() * h * w);
  for (const Sample& s : data.samples) {
    if (s.label > 255) throw ParameterError("IDX labels are single bytes");
    for (float v : s.image.values()) img.push_back(to_byte(v));
    lbl.push_back(static_cast<std::uint8_t>(s.label));
  }
  write_bytes(images_path, img);
  write_bytes(labels_path, lbl);
}

// ---------------------------------------------------------------------------
// GNT

std::vector<GntRecord> parse_gnt_records(std::span<const std::uint8_t> bytes) {
  std::vector<GntRecord> records;
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t left = bytes.size() - off;
    if (left < kGntHeaderBytes) throw CorruptRecordError("truncated record header", off);
    const std::uint8_t* p = bytes.data() + off;
    const std::uint32_t size = load_le32(p);
    GntRecord r;
    r.tag = static_cast<std::uint16_t>(p[4] << 8 | p[5]);
    r.width = load_le16(p + 6);
    r.height = load_le16(p + 8);
    if (size > kGntMaxRecordBytes) throw CorruptRecordError("record size over 64MB", off);
    if (r.width == 0 || r.height == 0) throw CorruptRecordError("zero bitmap dimension", off);
    const std::uint64_t want = kGntHeaderBytes + std::uint64_t{r.width} * r.height;
    if (size != want) {
      throw CorruptRecordError("record size " + std::to_string(size) + " != 10 + " +
                                   std::to_string(r.width) + "*" + std::to_string(r.height),
                               off);
    }
    if (left < size) throw CorruptRecordError("truncated record payload", off);
    r.bitmap.assign(p + kGntHeaderBytes, p + size);
    records.push_back(std::move(r));
    off += size;
  }
  return records;
}

std::vector<GntRecord> read_gnt_records(const std::string& path) {
  return parse_gnt_records(read_bytes(path));
}

void write_gnt(const std::string& path, const std::vector<GntRecord>& records) {
  std::vector<std::uint8_t> out;
  for (const GntRecord& r : records) {
    if (r.bitmap.size() != std::size_t{r.width} * r.height) {
      throw ParameterError("GNT bitmap size disagrees with width*height");
    }
    const std::uint64_t size = kGntHeaderBytes + r.bitmap.size();
    if (size > kGntMaxRecordBytes) throw ParameterError("GNT record too large");
    store_le(out, static_cast<std::uint32_t>(size), 4);
    out.push_back(static_cast<std::uint8_t>(r.tag >> 8));
    out.push_back(static_cast<std::uint8_t>(r.tag & 0xff));
    store_le(out, r.width, 2);
    store_le(out, r.height, 2);
    out.insert(out.end(), r.bitmap.begin(), r.bitmap.end());
  }
  write_bytes(path, out);
}

std::map<std::uint16_t, std::size_t> gnt_class_map(const std::vector<GntRecord>& records) {
  std::map<std::uint16_t, std::size_t> map;
  for (const GntRecord& r : records) map.emplace(r.tag, map.size());
  return map;
}

Tensor<float> pad_to_square(const Tensor<float>& image) {
  if (image.rank() != 2) throw DimensionError("pad_to_square expects [H, W]");
  const std::size_t h = image.dim(0), w = image.dim(1), side = std::max(h, w);
  Tensor<float> out({side, side});
  const std::size_t top = (side - h) / 2, left = (side - w) / 2;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) out[(top + y) * side + left + x] = image[y * w + x];
  }
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 2) throw DimensionError("resize_bilinear expects [H, W]");
  const std::size_t in_h = image.dim(0), in_w = image.dim(1);
  Tensor<float> out({out_h, out_w});
  auto source = [](std::size_t dst, std::size_t in, std::size_t outn, std::size_t& i0,
                   std::size_t& i1, double& f) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(s);
    i1 = std::min(i0 + 1, in - 1);
    f = s - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    std::size_t y0, y1;
    double fy;
    source(y, in_h, out_h, y0, y1, fy);
    for (std::size_t x = 0; x < out_w; ++x) {
      std::size_t x0, x1;
      double fx;
      source(x, in_w, out_w, x0, x1, fx);
      const double top = (1 - fx) * image[y0 * in_w + x0] + fx * image[y0 * in_w + x1];
      const double bot = (1 - fx) * image[y1 * in_w + x0] + fx * image[y1 * in_w + x1];
      out[y * out_w + x] = static_cast<float>((1 - fy) * top + fy * bot);
    }
  }
  return out;
}

Sample gnt_sample(const GntRecord& r, std::size_t label, std::size_t size) {
  if (r.bitmap.size() != std::size_t{r.width} * r.height || r.bitmap.empty()) {
    throw DataError("GNT bitmap size disagrees with width*height");
  }
  Tensor<float> ink({r.height, r.width});
  for (std::size_t i = 0; i < r.bitmap.size(); ++i) {
    ink[i] = static_cast<float>(255 - r.bitmap[i]) / 255.0f;
  }
  Sample s;
  s.image = resize_bilinear(pad_to_square(ink), size, size).reshaped({1, size, size});
  s.label = label;
  return s;
}

GntLoad read_gnt(const std::string& path, const std::map<std::uint16_t, std::size_t>& class_map,
                 std::size_t size) {
  GntLoad load;
  for (const auto& [tag, index] : class_map) {
    load.data.num_classes = std::max(load.data.num_classes, index + 1);
  }
  const auto records = read_gnt_records(path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = class_map.find(records[i].tag);
    if (it == class_map.end()) {
      ++load.skipped;
      continue;
    }
    Sample s = gnt_sample(records[i], it->second, size);
    s.source_id = path + "#" + std::to_string(i);
    load.data.samples.push_back(std::move(s));
  }
  return load;
}

// ---------------------------------------------------------------------------
// Synthetic glyphs

namespace {

// Strokes join neighbouring points of a 3x3 lattice: 6 horizontal,
// 6 vertical and 8 diagonal segments.
using Segment = std::array<int, 2>;

std::vector<Segment> lattice_segments() {
  std::vector<Segment> segs;
  auto id = [](int r, int c) { return r * 3 + c; };
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (c < 2) segs.push_back({id(r, c), id(r, c + 1)});
      if (r < 2) segs.push_back({id(r, c), id(r + 1, c)});
      if (r < 2 && c < 2) {
        segs.push_back({id(r, c), id(r + 1, c + 1)});
        segs.push_back({id(r, c + 1), id(r + 1, c)});
      }
    }
  }
  return segs;
}

// Five strokes per glyph; any two glyphs differ in at least two strokes.
const std::vector<std::uint32_t>& glyph_alphabet() {
  static const std::vector<std::uint32_t> alphabet = [] {
    const std::size_t n = lattice_segments().size();
    std::mt19937_64 rng(0x676c797068ULL);
    std::vector<std::uint32_t> out;
    while (out.size() < kGlyphAlphabet) {
      std::uint32_t mask = 0;
      while (std::popcount(mask) < 5) mask |= 1u << (rng() % n);
      bool distinct = true;
      for (std::uint32_t m : out) distinct = distinct && std::popcount(m ^ mask) >= 4;
      if (distinct) out.push_back(mask);
    }
    return out;
  }();
  return alphabet;
}

double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (ax + t * dx), ey = py - (ay + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

Dataset synth_glyphs(const SynthOptions& o) {
  if (o.num_classes == 0 || o.num_classes > kGlyphAlphabet) {
    throw ParameterError("synth_glyphs: num_classes must be in [1, " +
                         std::to_string(kGlyphAlphabet) + "]");
  }
  if (o.size < 8) throw ParameterError("synth_glyphs: image size below 8");
  if (!(o.noise >= 0) || !(o.jitter >= 0)) {
    throw ParameterError("synth_glyphs: noise and jitter must be non-negative");
  }
  const auto segs = lattice_segments();
  const auto& alphabet = glyph_alphabet();
  const double center = (static_cast<double>(o.size) - 1.0) / 2.0;
  const double unit = 0.28 * static_cast<double>(o.size);  // lattice pitch in pixels
  const double half_width = 0.03 * static_cast<double>(o.size);
  const double px_scale = static_cast<double>(o.size) / 64.0;

  std::mt19937_64 rng(o.seed);
  Dataset data;
  data.num_classes = o.num_classes;
  data.samples.reserve(o.num_classes * o.samples_per_class);
  for (std::size_t c = 0; c < o.num_classes; ++c) {
    for (std::size_t i = 0; i < o.samples_per_class; ++i) {
      const double scale = 1.0 + 0.1 * o.jitter * (2 * uniform01(rng) - 1);
      const double angle = (10.0 * std::numbers::pi / 180.0) * o.jitter * (2 * uniform01(rng) - 1);
      const double tx = 4.0 * px_scale * o.jitter * (2 * uniform01(rng) - 1);
      const double ty = 4.0 * px_scale * o.jitter * (2 * uniform01(rng) - 1);
      const double cs = std::cos(angle) * scale * unit, sn = std::sin(angle) * scale * unit;
      std::array<double, 9> lx{}, ly{};
      for (int p = 0; p < 9; ++p) {
        const double u = p % 3 - 1.0, v = p / 3 - 1.0;
        lx[p] = center + tx + cs * u - sn * v;
        ly[p] = center + ty + sn * u + cs * v;
      }
      std::vector<Segment> strokes;
      for (std::size_t s = 0; s < segs.size(); ++s) {
        if (alphabet[c] >> s & 1u) strokes.push_back(segs[s]);
      }

      Sample sample;
      sample.image = Tensor<float>({1, o.size, o.size});
      for (std::size_t y = 0; y < o.size; ++y) {
        for (std::size_t x = 0; x < o.size; ++x) {
          double d = std::numeric_limits<double>::infinity();
          for (const Segment& s : strokes) {
            d = std::min(d, segment_distance(static_cast<double>(x), static_cast<double>(y),
                                             lx[s[0]], ly[s[0]], lx[s[1]], ly[s[1]]));
          }
          double v = std::clamp(half_width + 0.5 - d, 0.0, 1.0);
          if (o.noise > 0) v = std::clamp(v + o.noise * normal(rng), 0.0, 1.0);
          sample.image[y * o.size + x] = static_cast<float>(v);
        }
      }
      sample.label = c;
      sample.source_id = "synth:" + std::to_string(c) + ":" + std::to_string(i);
      data.samples.push_back(std::move(sample));
    }
  }
  return data;
}

}  // namespace ccnn
