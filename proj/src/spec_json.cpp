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


#include "ccnn/spec_json.hpp"

#include <set>

#include <nlohmann/json.hpp>

namespace ccnn {
namespace {

using nlohmann::json;

json fire_json(const FireSpec& f) {
  return {{"type", "fire"},          {"name", f.name},           {"in", f.in_channels},
          {"out", f.out_channels},   {"squeeze", f.squeeze},     {"expand1x1", f.expand1x1},
          {"expand3x3", f.expand3x3}};
}

json head_json(const HeadSpec& h) {
  json j = {{"kind", to_string(h.kind)},
            {"num_classes", h.num_classes},
            {"dropout", h.dropout_rate}};
  if (h.kind == HeadKind::FC) j["hidden_units"] = h.hidden_units;
  return j;
}

void only_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw SpecError(std::string(where) + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw SpecError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename V>
V get(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw SpecError(std::string(where) + ": missing '" + key + "'");
  return j.at(key).get<V>();
}

template <typename V>
V get_or(const json& j, const char* key, V fallback) {
  return j.contains(key) ? j.at(key).get<V>() : fallback;
}

// Default sizing unless squeeze/expand sizes are given explicitly.
FireSpec parse_fire(const json& j) {
  only_keys(j, {"type", "name", "in", "out", "squeeze", "expand1x1", "expand3x3"}, "fire");
  const auto name = get<std::string>(j, "name", "fire");
  const auto in = get<std::size_t>(j, "in", "fire");
  const auto out = get<std::size_t>(j, "out", "fire");
  if (!j.contains("squeeze") && !j.contains("expand1x1") && !j.contains("expand3x3")) {
    return FireSpec::standard(name, in, out);
  }
  return FireSpec{name, in, out, get<std::size_t>(j, "squeeze", "fire"),
                  get<std::size_t>(j, "expand1x1", "fire"),
                  get<std::size_t>(j, "expand3x3", "fire")};
}

HeadSpec parse_head(const json& j) {
  only_keys(j, {"kind", "num_classes", "dropout", "hidden_units"}, "head");
  HeadSpec h;
  h.kind = head_kind_from_string(get<std::string>(j, "kind", "head"));
  h.num_classes = get<std::size_t>(j, "num_classes", "head");
  h.dropout_rate = get_or<double>(j, "dropout", h.dropout_rate);
  h.hidden_units = get_or<std::size_t>(j, "hidden_units", h.hidden_units);
  return h;
}

LayerSpec parse_layer(const json& j) {
  const std::string type = get<std::string>(j, "type", "layer");
  if (type == "conv") {
    only_keys(j, {"type", "name", "in", "out", "kernel", "stride"}, "conv");
    ConvLayer c;
    c.name = get<std::string>(j, "name", "conv");
    c.in_channels = get<std::size_t>(j, "in", "conv");
    c.out_channels = get<std::size_t>(j, "out", "conv");
    c.kernel = get_or<std::size_t>(j, "kernel", c.kernel);
    c.stride = get_or<std::size_t>(j, "stride", c.stride);
    return c;
  }
  if (type == "maxpool") {
    only_keys(j, {"type", "name"}, "maxpool");
    return MaxPoolLayer{get<std::string>(j, "name", "maxpool")};
  }
  if (type == "fire") return parse_fire(j);
  throw SpecError("unknown layer type '" + type + "'");
}

NetworkSpec parse(const json& j) {
  if (j.contains("preset")) {
    only_keys(j, {"preset", "num_classes", "width_divisor", "branches", "head", "input_size"},
              "preset spec");
    const auto preset = get<std::string>(j, "preset", "preset spec");
    if (preset != "default") throw SpecError("unknown preset '" + preset + "'");
    return default_network_spec(get<std::size_t>(j, "num_classes", "preset spec"),
                                get_or<std::size_t>(j, "width_divisor", 1),
                                get_or<bool>(j, "branches", true),
                                head_kind_from_string(get_or<std::string>(j, "head", "wap")),
                                get_or<std::size_t>(j, "input_size", 64));
  }
  only_keys(j, {"input_channels", "input_size", "num_classes", "backbone", "head", "branches"},
            "spec");
  NetworkSpec s;
  s.input_channels = get<std::size_t>(j, "input_channels", "spec");
  s.input_size = get<std::size_t>(j, "input_size", "spec");
  s.num_classes = get<std::size_t>(j, "num_classes", "spec");
  for (const auto& layer : get<json>(j, "backbone", "spec")) s.backbone.push_back(parse_layer(layer));
  s.head = parse_head(get<json>(j, "head", "spec"));
  if (j.contains("branches")) {
    for (const auto& b : j.at("branches")) {
      only_keys(b, {"name", "attach_after", "fire", "head"}, "branch");
      BranchSpec br;
      br.name = get<std::string>(b, "name", "branch");
      br.attach_after = get<std::string>(b, "attach_after", "branch");
      br.fire = parse_fire(get<json>(b, "fire", "branch"));
      br.head = parse_head(get<json>(b, "head", "branch"));
      s.branches.push_back(std::move(br));
    }
  }
  return s;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec, int indent) {
  json backbone = json::array();
  for (const auto& layer : spec.backbone) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      backbone.push_back({{"type", "conv"},
                          {"name", c->name},
                          {"in", c->in_channels},
                          {"out", c->out_channels},
                          {"kernel", c->kernel},
                          {"stride", c->stride}});
    } else if (const auto* f = std::get_if<FireSpec>(&layer)) {
      backbone.push_back(fire_json(*f));
    } else {
      backbone.push_back({{"type", "maxpool"}, {"name", layer_name(layer)}});
    }
  }
  json branches = json::array();
  for (const auto& b : spec.branches) {
    branches.push_back({{"name", b.name},
                        {"attach_after", b.attach_after},
                        {"fire", fire_json(b.fire)},
                        {"head", head_json(b.head)}});
  }
  json j = {{"input_channels", spec.input_channels},
            {"input_size", spec.input_size},
            {"num_classes", spec.num_classes},
            {"backbone", backbone},
            {"head", head_json(spec.head)},
            {"branches", branches}};
  return j.dump(indent);
}

NetworkSpec spec_from_json(const std::string& text) {
  NetworkSpec spec;
  try {
    spec = parse(json::parse(text));
  } catch (const json::exception& e) {
    throw SpecError(std::string("spec JSON: ") + e.what());
  } catch (const ParameterError& e) {
    throw SpecError(std::string("spec JSON: ") + e.what());
  }
  validate(spec);
  return spec;
}

}  // namespace ccnn
