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

#include "ccnn/architecture.hpp"

#include <algorithm>
#include <set>

#include "ccnn/errors.hpp"

namespace ccnn {

FireSpec FireSpec::standard(std::string name, std::size_t in_channels,
                            std::size_t out_channels) {
  if (out_channels == 0 || out_channels % 8 != 0) {
    throw SpecError("fire " + name + ": default sizing needs output channels divisible by 8, got " +
                    std::to_string(out_channels));
  }
  return FireSpec{std::move(name), in_channels, out_channels, out_channels / 8,
                  out_channels / 2, out_channels / 2};
}

void FireSpec::validate() const {
  if (in_channels == 0 || squeeze == 0 || expand1x1 == 0 || expand3x3 == 0) {
    throw SpecError("fire " + name + ": channel counts must be positive");
  }
  if (expand1x1 + expand3x3 != out_channels) {
    throw SpecError("fire " + name + ": expand1x1 + expand3x3 = " +
                    std::to_string(expand1x1 + expand3x3) + " but output channels = " +
                    std::to_string(out_channels));
  }
}

const std::string& layer_name(const LayerSpec& layer) {
  return std::visit([](const auto& l) -> const std::string& { return l.name; }, layer);
}

const char* to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::FC: return "fc";
    case HeadKind::GAP: return "gap";
    case HeadKind::WAP: return "wap";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "fc" || s == "FC") return HeadKind::FC;
  if (s == "gap" || s == "GAP") return HeadKind::GAP;
  if (s == "wap" || s == "WAP" || s == "gwap") return HeadKind::WAP;
  throw SpecError("unknown head kind '" + s + "'");
}

const char* to_string(ParamRole role) {
  switch (role) {
    case ParamRole::ConvWeight: return "conv_weight";
    case ParamRole::BnGamma: return "bn_gamma";
    case ParamRole::BnBeta: return "bn_beta";
    case ParamRole::BnMean: return "bn_mean";
    case ParamRole::BnVar: return "bn_var";
    case ParamRole::GwapWeight: return "gwap_weight";
    case ParamRole::LinearWeight: return "linear_weight";
    case ParamRole::LinearBias: return "linear_bias";
    case ParamRole::Unassigned: return "unassigned";
  }
  return "?";
}

bool is_trainable(ParamRole role) {
  return role != ParamRole::BnMean && role != ParamRole::BnVar &&
         role != ParamRole::Unassigned;
}

std::string param_scope(const std::string& name) {
  return name.substr(0, name.find('/'));
}

namespace {

void validate_head(const HeadSpec& head, std::size_t num_classes, const std::string& where) {
  if (head.num_classes != num_classes) {
    throw SpecError(where + ": head predicts " + std::to_string(head.num_classes) +
                    " classes but the network has " + std::to_string(num_classes));
  }
  if (!(head.dropout_rate >= 0.0 && head.dropout_rate < 1.0)) {
    throw SpecError(where + ": dropout rate must be in [0,1)");
  }
  if (head.kind == HeadKind::FC && head.hidden_units == 0) {
    throw SpecError(where + ": FC head needs hidden units");
  }
}

}  // namespace

std::vector<FeatureShape> backbone_shapes(const NetworkSpec& spec) {
  if (spec.input_channels == 0 || spec.input_size == 0) {
    throw SpecError("input dimensions must be positive");
  }
  FeatureShape cur{spec.input_channels, spec.input_size, spec.input_size};
  std::vector<FeatureShape> shapes;
  std::set<std::string> names;
  for (const LayerSpec& layer : spec.backbone) {
    const std::string& name = layer_name(layer);
    if (name.empty() || name.find('/') != std::string::npos) {
      throw SpecError("layer name '" + name + "' must be non-empty and contain no '/'");
    }
    if (!names.insert(name).second) throw SpecError("duplicate layer name " + name);
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (conv->in_channels != cur.channels) {
        throw SpecError("channel flow: " + name + " expects " +
                        std::to_string(conv->in_channels) + " input channels, receives " +
                        std::to_string(cur.channels));
      }
      if (conv->out_channels == 0 || conv->kernel == 0 || conv->stride == 0) {
        throw SpecError(name + ": conv dimensions must be positive");
      }
      cur = {conv->out_channels, (cur.height + conv->stride - 1) / conv->stride,
             (cur.width + conv->stride - 1) / conv->stride};
    } else if (const auto* fire = std::get_if<FireSpec>(&layer)) {
      fire->validate();
      if (fire->in_channels != cur.channels) {
        throw SpecError("channel flow: " + name + " expects " +
                        std::to_string(fire->in_channels) + " input channels, receives " +
                        std::to_string(cur.channels));
      }
      cur.channels = fire->out_channels;
    } else {
      if (cur.height % 2 != 0 || cur.width % 2 != 0) {
        throw SpecError(name + ": maxpool needs even spatial size, got " +
                        std::to_string(cur.height) + "x" + std::to_string(cur.width));
      }
      cur.height /= 2;
      cur.width /= 2;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::size_t backbone_index(const NetworkSpec& spec, const std::string& layer) {
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    if (layer_name(spec.backbone[i]) == layer) return i;
  }
  throw SpecError("attach point '" + layer + "' is not a backbone layer");
}

const BranchSpec& find_branch(const NetworkSpec& spec, const std::string& name) {
  for (const BranchSpec& b : spec.branches) {
    if (b.name == name) return b;
  }
  throw SpecError("unknown exit branch '" + name + "'");
}

std::vector<std::string> exit_names(const NetworkSpec& spec) {
  std::vector<std::string> names;
  for (const BranchSpec& b : spec.branches) names.push_back(b.name);
  names.emplace_back(kFinalHead);
  return names;
}

void validate(const NetworkSpec& spec) {
  if (spec.num_classes == 0) throw SpecError("num_classes must be positive");
  if (spec.backbone.empty()) throw SpecError("backbone is empty");
  const auto shapes = backbone_shapes(spec);
  validate_head(spec.head, spec.num_classes, kFinalHead);
  std::set<std::string> scopes{kBackboneScope, kFinalHead};
  for (const BranchSpec& b : spec.branches) {
    if (b.name.empty() || b.name.find('/') != std::string::npos) {
      throw SpecError("branch name '" + b.name + "' must be non-empty and contain no '/'");
    }
    if (!scopes.insert(b.name).second) throw SpecError("duplicate branch name " + b.name);
    const std::size_t at = backbone_index(spec, b.attach_after);
    b.fire.validate();
    if (b.fire.in_channels != shapes[at].channels) {
      throw SpecError("channel flow: branch " + b.name + " expects " +
                      std::to_string(b.fire.in_channels) + " channels after " +
                      b.attach_after + ", which produces " +
                      std::to_string(shapes[at].channels));
    }
    validate_head(b.head, spec.num_classes, b.name);
  }
}

NetworkSpec default_network_spec(std::size_t num_classes, std::size_t width_divisor,
                                 bool with_branches, HeadKind head,
                                 std::size_t input_size) {
  if (width_divisor == 0) throw SpecError("width divisor must be positive");
  auto ch = [&](std::size_t c) {
    if (c % width_divisor != 0) {
      throw SpecError("width divisor " + std::to_string(width_divisor) +
                      " does not divide " + std::to_string(c));
    }
    return c / width_divisor;
  };
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.input_size = input_size;
  spec.num_classes = num_classes;
  spec.backbone = {
      ConvLayer{"conv1", 1, ch(64), 3, 1},
      MaxPoolLayer{"maxpool1"},
      FireSpec::standard("fire2", ch(64), ch(128)),
      FireSpec::standard("fire3", ch(128), ch(128)),
      MaxPoolLayer{"maxpool2"},
      FireSpec::standard("fire4", ch(128), ch(256)),
      FireSpec::standard("fire5", ch(256), ch(256)),
      MaxPoolLayer{"maxpool3"},
      FireSpec::standard("fire6", ch(256), ch(384)),
      FireSpec::standard("fire7", ch(384), ch(384)),
      FireSpec::standard("fire8", ch(384), ch(512)),
      FireSpec::standard("fire9", ch(512), ch(512)),
  };
  spec.head = HeadSpec{head, 1024, num_classes, 0.5};
  if (with_branches) {
    auto like = [&](const std::string& layer) {
      FireSpec f = std::get<FireSpec>(spec.backbone[backbone_index(spec, layer)]);
      f.name = "fire";
      return f;
    };
    spec.branches = {
        BranchSpec{"mid_a", "fire4", like("fire5"), HeadSpec{HeadKind::WAP, 1024, num_classes, 0.2}},
        BranchSpec{"mid_b", "fire6", like("fire7"), HeadSpec{HeadKind::WAP, 1024, num_classes, 0.2}},
    };
  }
  return spec;
}

namespace {

void declare_conv(std::vector<ParamDecl>& out, const std::string& prefix,
                  std::size_t in, std::size_t outc, std::size_t k) {
  out.push_back({prefix + "/w", {outc, in, k, k}, ParamRole::ConvWeight, in * k * k});
  out.push_back({prefix + "/bn_gamma", {outc}, ParamRole::BnGamma, 0});
  out.push_back({prefix + "/bn_beta", {outc}, ParamRole::BnBeta, 0});
  out.push_back({prefix + "/bn_mean", {outc}, ParamRole::BnMean, 0});
  out.push_back({prefix + "/bn_var", {outc}, ParamRole::BnVar, 0});
}

void declare_fire(std::vector<ParamDecl>& out, const std::string& prefix,
                  const FireSpec& f) {
  declare_conv(out, prefix + "/squeeze", f.in_channels, f.squeeze, 1);
  declare_conv(out, prefix + "/expand1x1", f.squeeze, f.expand1x1, 1);
  declare_conv(out, prefix + "/expand3x3", f.squeeze, f.expand3x3, 3);
}

void declare_head(std::vector<ParamDecl>& out, const std::string& scope,
                  const HeadSpec& head, const FeatureShape& in) {
  std::size_t features = in.channels;
  switch (head.kind) {
    case HeadKind::WAP:
      out.push_back({scope + "/gwap/w", {in.channels, in.height, in.width},
                     ParamRole::GwapWeight, 0});
      break;
    case HeadKind::GAP:
      break;
    case HeadKind::FC:
      out.push_back({scope + "/hidden/w", {in.size(), head.hidden_units},
                     ParamRole::LinearWeight, in.size()});
      out.push_back({scope + "/hidden/b", {head.hidden_units}, ParamRole::LinearBias, 0});
      features = head.hidden_units;
      break;
  }
  out.push_back({scope + "/classifier/w", {features, head.num_classes},
                 ParamRole::LinearWeight, features});
  out.push_back({scope + "/classifier/b", {head.num_classes}, ParamRole::LinearBias, 0});
}

}  // namespace

std::vector<ParamDecl> declare_parameters(const NetworkSpec& spec) {
  validate(spec);
  const auto shapes = backbone_shapes(spec);
  std::vector<ParamDecl> out;
  const std::string bb = kBackboneScope;
  for (const LayerSpec& layer : spec.backbone) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      declare_conv(out, bb + "/" + conv->name, conv->in_channels, conv->out_channels,
                   conv->kernel);
    } else if (const auto* fire = std::get_if<FireSpec>(&layer)) {
      declare_fire(out, bb + "/" + fire->name, *fire);
    }
  }
  declare_head(out, kFinalHead, spec.head, shapes.back());
  for (const BranchSpec& b : spec.branches) {
    declare_fire(out, b.name + "/" + b.fire.name, b.fire);
    FeatureShape at = shapes[backbone_index(spec, b.attach_after)];
    at.channels = b.fire.out_channels;
    declare_head(out, b.name, b.head, at);
  }
  return out;
}

}  // namespace ccnn
