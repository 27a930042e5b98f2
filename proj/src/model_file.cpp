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


#include "ccnn/model_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "ccnn/spec_json.hpp"

namespace ccnn {
namespace {

constexpr std::uint8_t kEncFloat = 0;
constexpr std::uint8_t kEncQuantized = 1;
constexpr std::size_t kMaxRank = 8;

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> out;

 private:
  void le(std::uint32_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() { return *take(1); }
  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
           std::uint32_t{p[3]} << 24;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    const auto* p = take(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > b_.size() - off_) {
      throw TruncatedError("model file truncated at byte " + std::to_string(off_));
    }
    const auto* p = b_.data() + off_;
    off_ += n;
    return p;
  }
  std::size_t left() const { return b_.size() - off_; }
  std::size_t offset() const { return off_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t off_ = 0;
};

std::size_t packed_bytes(std::size_t count, int bits) {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

void pack_codes(Writer& w, const QuantizedTensor& q) {
  const std::size_t start = w.out.size();
  w.out.resize(start + packed_bytes(q.codes.size(), q.bits), 0);
  const std::uint32_t mask = q.bits == 32 ? ~0u : (1u << q.bits) - 1;
  std::size_t bit = 0;
  for (std::int32_t c : q.codes) {
    const std::uint32_t u = static_cast<std::uint32_t>(c) & mask;
    for (int i = 0; i < q.bits; ++i, ++bit) {
      if (u >> i & 1u) w.out[start + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    }
  }
}

std::vector<std::int32_t> unpack_codes(const std::uint8_t* p, std::size_t count, int bits) {
  std::vector<std::int32_t> codes(count);
  std::size_t bit = 0;
  for (std::size_t k = 0; k < count; ++k) {
    std::uint32_t u = 0;
    for (int i = 0; i < bits; ++i, ++bit) u |= std::uint32_t{(p[bit / 8] >> (bit % 8)) & 1u} << i;
    if (bits < 32 && (u >> (bits - 1) & 1u)) u |= ~((1u << bits) - 1);  // sign-extend
    codes[k] = static_cast<std::int32_t>(u);
  }
  return codes;
}

bool valid_bits(int bits) { return bits == 2 || bits == 4 || bits == 8 || bits == 16; }

}  // namespace

Network<float> ModelFile::network() const {
  return Network<float>(spec, decode_parameters(params));
}

ModelFile make_model_file(const Network<float>& net, const std::optional<QuantScheme>& quant) {
  if (!net.initialized()) throw UsageError("cannot save a network without parameters");
  ModelFile m;
  m.spec = net.spec();
  m.quant = quant;
  m.params = encode_parameters(net.parameters(), quant.value_or(QuantScheme::float32()));
  return m;
}

std::vector<std::uint8_t> serialize_model(const ModelFile& model) {
  Writer w;
  for (char c : kModelMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kModelVersion);
  nlohmann::json header = {{"spec", nlohmann::json::parse(spec_to_json(model.spec))},
                           {"quant", nullptr}};
  if (model.quant) header["quant"] = model.quant->str();
  const std::string text = header.dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  if (model.params.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError("too many parameter records");
  }
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ParameterError("parameter name too long: " + p.name);
    }
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.u8(static_cast<std::uint8_t>(p.role));
    const Shape& shape = p.quantized() ? std::get<QuantizedTensor>(p.payload).shape
                                       : std::get<Tensor<float>>(p.payload).shape();
    if (shape.size() > kMaxRank) throw ParameterError("rank too large: " + p.name);
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) {
      if (d > std::numeric_limits<std::uint32_t>::max()) throw ParameterError("dim too large");
      w.u32(static_cast<std::uint32_t>(d));
    }
    if (const auto* q = std::get_if<QuantizedTensor>(&p.payload)) {
      if (!valid_bits(q->bits)) throw ParameterError("unsupported code width");
      w.u8(kEncQuantized);
      w.u8(static_cast<std::uint8_t>(q->bits));
      w.f32(q->scale);
      pack_codes(w, *q);
    } else {
      w.u8(kEncFloat);
      for (float v : std::get<Tensor<float>>(p.payload).values()) w.f32(v);
    }
  }
  w.u32(crc32_of(w.out));
  return w.out;
}

ModelFile parse_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw BadMagicError("not a CCNN model file");
  }
  Reader r(bytes);
  r.take(4);
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw VersionError("model format version " + std::to_string(version) + ", expected " +
                       std::to_string(kModelVersion));
  }
  if (bytes.size() < 10) throw TruncatedError("model file truncated");
  const std::size_t body = bytes.size() - 4;
  const std::uint8_t* t = bytes.data() + body;
  const std::uint32_t stored = std::uint32_t{t[0]} | std::uint32_t{t[1]} << 8 |
                               std::uint32_t{t[2]} << 16 | std::uint32_t{t[3]} << 24;
  if (crc32_of(bytes.first(body)) != stored) throw ChecksumError("model file checksum mismatch");
  Reader in(bytes.first(body));
  in.take(6);

  ModelFile m;
  const std::uint32_t header_len = in.u32();
  const std::string header_text = in.str(header_len);
  try {
    const auto header = nlohmann::json::parse(header_text);
    m.spec = spec_from_json(header.at("spec").dump());
    if (!header.at("quant").is_null()) {
      m.quant = QuantScheme::parse(header.at("quant").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model header: ") + e.what());
  } catch (const SpecError& e) {
    throw DataError(std::string("model header: ") + e.what());
  } catch (const ParameterError& e) {
    throw DataError(std::string("model header: ") + e.what());
  }

  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    EncodedParameter p;
    p.name = in.str(in.u16());
    const std::uint8_t role = in.u8();
    if (role >= static_cast<std::uint8_t>(ParamRole::Unassigned)) {
      throw DataError("record " + p.name + ": unknown parameter role");
    }
    p.role = static_cast<ParamRole>(role);
    const std::uint8_t rank = in.u8();
    if (rank == 0 || rank > kMaxRank) throw DataError("record " + p.name + ": bad rank");
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = in.u32();
      if (d == 0) throw DataError("record " + p.name + ": zero dimension");
      // Bound the element count by the bytes that remain so a corrupt
      // header cannot request an unbounded allocation.
      if (n > (std::size_t{8} * in.left()) / d) {
        throw TruncatedError("record " + p.name + ": payload larger than file");
      }
      n *= d;
    }
    const std::uint8_t enc = in.u8();
    if (enc == kEncFloat) {
      const std::uint8_t* payload = in.take(n * 4);
      Tensor<float> t(shape);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t u;
        std::memcpy(&u, payload + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
        t[i] = std::bit_cast<float>(u);
      }
      p.payload = std::move(t);
    } else if (enc == kEncQuantized) {
      QuantizedTensor q;
      q.shape = shape;
      q.bits = in.u8();
      if (!valid_bits(q.bits)) throw DataError("record " + p.name + ": bad code width");
      q.scale = in.f32();
      if (!(q.scale > 0.0f) || !std::isfinite(q.scale)) {
        throw DataError("record " + p.name + ": bad scale");
      }
      q.codes = unpack_codes(in.take(packed_bytes(n, q.bits)), n, q.bits);
      for (std::int32_t c : q.codes) {
        if (c > q.max_code() || c < -q.max_code()) {
          throw DataError("record " + p.name + ": code out of range");
        }
      }
      p.payload = std::move(q);
    } else {
      throw UnknownEncodingError("record " + p.name + ": unknown encoding tag " +
                                 std::to_string(enc));
    }
    m.params.push_back(std::move(p));
  }
  if (in.left() != 0) throw DataError("trailing bytes after parameter records");
  return m;
}

void save_model(const std::string& path, const ModelFile& model) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

void save_model(const std::string& path, const Network<float>& net,
                const std::optional<QuantScheme>& quant) {
  save_model(path, make_model_file(net, quant));
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return parse_model(bytes);
}

std::size_t model_overhead_bytes(const ModelFile& model) {
  std::size_t payload = 0;
  for (const auto& p : model.params) {
    if (const auto* q = std::get_if<QuantizedTensor>(&p.payload)) {
      payload += packed_bytes(q->codes.size(), q->bits) + 4;
    } else {
      payload += 4 * std::get<Tensor<float>>(p.payload).size();
    }
  }
  return serialize_model(model).size() - payload;
}

}  // namespace ccnn
