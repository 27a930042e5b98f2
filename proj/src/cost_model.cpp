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

#include "ccnn/cost_model.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ccnn/errors.hpp"

namespace ccnn {

Rational Rational::make(std::uint64_t num, std::uint64_t den) {
  if (den == 0) throw ParameterError("rational with zero denominator");
  const std::uint64_t g = std::gcd(num, den);
  return g == 0 ? Rational{0, 1} : Rational{num / g, den / g};
}

std::uint64_t standard_conv_cost(std::uint64_t in_channels, std::uint64_t out_channels,
                                 std::uint64_t size, std::uint64_t kernel) {
  return kernel * kernel * in_channels * out_channels * size * size;
}

std::uint64_t fire_cost(std::uint64_t in_channels, std::uint64_t out_channels,
                        std::uint64_t size) {
  if (in_channels == 0 || out_channels == 0 || out_channels % 8 != 0) {
    throw ParameterError("fire_cost: default sizing needs positive M and 8 | N");
  }
  return (in_channels + 5 * out_channels) * out_channels * size * size / 8;
}

std::uint64_t fire_cost(const FireSpec& f, std::uint64_t size) {
  const bool standard = f.out_channels % 8 == 0 && f.squeeze == f.out_channels / 8 &&
                        f.expand1x1 == f.out_channels / 2 &&
                        f.expand3x3 == f.out_channels / 2;
  if (standard) return fire_cost(f.in_channels, f.out_channels, size);
  return standard_conv_cost(f.in_channels, f.squeeze, size, 1) +
         standard_conv_cost(f.squeeze, f.expand1x1, size, 1) +
         standard_conv_cost(f.squeeze, f.expand3x3, size, 3);
}

Rational reduction_ratio(std::uint64_t in_channels, std::uint64_t out_channels) {
  if (in_channels == 0 || out_channels == 0) {
    throw ParameterError("reduction_ratio: channel counts must be positive");
  }
  return Rational::make(in_channels + 5 * out_channels, 72 * in_channels);
}

namespace {

void add_conv(LayerCost& c, std::uint64_t in, std::uint64_t out, std::uint64_t k,
              std::uint64_t out_size) {
  const std::uint64_t weights = k * k * in * out;
  c.conv_weights += weights;
  c.conv_tensors += 1;
  c.bn_values += 4 * out;
  c.params += weights + 4 * out;
  c.macs += standard_conv_cost(in, out, out_size, k);
}

LayerCost fire_layer(std::string name, std::string scope, const FireSpec& f,
                     std::uint64_t size) {
  LayerCost c{std::move(name), std::move(scope)};
  add_conv(c, f.in_channels, f.squeeze, 1, size);
  add_conv(c, f.squeeze, f.expand1x1, 1, size);
  add_conv(c, f.squeeze, f.expand3x3, 3, size);
  c.macs = fire_cost(f, size);
  return c;
}

LayerCost linear_layer(std::string name, std::string scope, std::uint64_t in,
                       std::uint64_t out) {
  LayerCost c{std::move(name), std::move(scope)};
  c.linear_params = in * out + out;
  c.linear_tensors = 2;
  c.params = c.linear_params;
  c.macs = in * out;
  return c;
}

void add_head(std::vector<LayerCost>& rows, const std::string& scope, const HeadSpec& h,
              const FeatureShape& in) {
  std::uint64_t features = in.channels;
  if (h.kind == HeadKind::WAP) {
    LayerCost c{scope + "/gwap", scope};
    c.gwap_weights = in.size();
    c.gwap_tensors = 1;
    c.params = in.size();
    c.macs = in.size();
    rows.push_back(c);
  } else if (h.kind == HeadKind::FC) {
    rows.push_back(linear_layer(scope + "/hidden", scope, in.size(), h.hidden_units));
    features = h.hidden_units;
  }
  rows.push_back(linear_layer(scope + "/classifier", scope, features, h.num_classes));
}

}  // namespace

const ExitCost& CostReport::exit(const std::string& name) const {
  for (const ExitCost& e : exits) {
    if (e.name == name) return e;
  }
  throw SpecError("no exit named '" + name + "' in cost report");
}

const LayerCost& CostReport::layer(const std::string& name) const {
  for (const LayerCost& l : layers) {
    if (l.name == name) return l;
  }
  throw SpecError("no layer named '" + name + "' in cost report");
}

std::uint64_t CostReport::scope_macs(const std::string& scope) const {
  std::uint64_t macs = 0;
  for (const LayerCost& l : layers) {
    if (l.scope == scope) macs += l.macs;
  }
  return macs;
}

CostReport network_cost(const NetworkSpec& spec, const std::optional<QuantScheme>& quant) {
  CostReport report;
  report.quant = quant;
  if (spec.backbone.empty()) return report;
  validate(spec);
  if (quant) quant->validate();

  const auto shapes = backbone_shapes(spec);
  const std::string bb = kBackboneScope;
  for (std::size_t i = 0; i < spec.backbone.size(); ++i) {
    const LayerSpec& layer = spec.backbone[i];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      LayerCost c{conv->name, bb};
      add_conv(c, conv->in_channels, conv->out_channels, conv->kernel, shapes[i].height);
      report.layers.push_back(c);
    } else if (const auto* f = std::get_if<FireSpec>(&layer)) {
      report.layers.push_back(fire_layer(f->name, bb, *f, shapes[i].height));
    } else {
      report.layers.push_back(LayerCost{layer_name(layer), bb});
    }
  }
  add_head(report.layers, kFinalHead, spec.head, shapes.back());
  for (const BranchSpec& b : spec.branches) {
    FeatureShape at = shapes[backbone_index(spec, b.attach_after)];
    report.layers.push_back(fire_layer(b.name + "/" + b.fire.name, b.name, b.fire, at.height));
    at.channels = b.fire.out_channels;
    add_head(report.layers, b.name, b.head, at);
  }

  auto accumulate_exit = [&](const std::string& name, std::size_t backbone_layers,
                             const std::string& scope) {
    ExitCost e{name};
    for (std::size_t i = 0; i < backbone_layers; ++i) {
      e.params += report.layers[i].params;
      e.macs += report.layers[i].macs;
    }
    for (const LayerCost& l : report.layers) {
      if (l.scope == scope) {
        e.params += l.params;
        e.macs += l.macs;
      }
    }
    return e;
  };
  for (const BranchSpec& b : spec.branches) {
    report.exits.push_back(
        accumulate_exit(b.name, backbone_index(spec, b.attach_after) + 1, b.name));
  }
  report.exits.push_back(accumulate_exit(kFinalHead, spec.backbone.size(), kFinalHead));

  const QuantScheme scheme = quant.value_or(QuantScheme::float32());
  for (const LayerCost& l : report.layers) {
    report.total_params += l.params;
    report.total_macs += l.macs;
    if (l.conv_tensors) {
      report.storage.add(QuantBucket::Conv, scheme.conv_bits, l.conv_weights, l.conv_tensors);
      report.storage.add(QuantBucket::BnFloat, kFloatBits, l.bn_values, 4 * l.conv_tensors);
    }
    if (l.gwap_tensors) {
      report.storage.add(QuantBucket::Gwap, scheme.gwap_bits, l.gwap_weights, l.gwap_tensors);
    }
    if (l.linear_tensors) {
      report.storage.add(QuantBucket::Classifier, scheme.classifier_bits, l.linear_params,
                         l.linear_tensors);
    }
  }
  return report;
}

std::string with_thousands(std::uint64_t value) {
  std::string s = std::to_string(value);
  for (long i = static_cast<long>(s.size()) - 3; i > 0; i -= 3) {
    s.insert(static_cast<std::size_t>(i), ",");
  }
  return s;
}

std::string format_table(const CostReport& report) {
  std::ostringstream os;
  std::size_t width = 12;
  for (const LayerCost& l : report.layers) width = std::max(width, l.name.size() + 2);
  os << std::left << std::setw(static_cast<int>(width)) << "layer" << std::right
     << std::setw(14) << "params" << std::setw(16) << "macs" << "\n";
  os << std::string(width + 30, '-') << "\n";
  for (const LayerCost& l : report.layers) {
    os << std::left << std::setw(static_cast<int>(width)) << l.name << std::right
       << std::setw(14) << with_thousands(l.params) << std::setw(16)
       << with_thousands(l.macs) << "\n";
  }
  os << std::string(width + 30, '-') << "\n";
  os << std::left << std::setw(static_cast<int>(width)) << "total" << std::right
     << std::setw(14) << with_thousands(report.total_params) << std::setw(16)
     << with_thousands(report.total_macs) << "\n\n";
  os << "exit totals (shared prefix + branch)\n";
  for (const ExitCost& e : report.exits) {
    os << "  " << std::left << std::setw(static_cast<int>(width)) << e.name << std::right
       << std::setw(14) << with_thousands(e.params) << std::setw(16)
       << with_thousands(e.macs) << "  (" << std::fixed << std::setprecision(2)
       << static_cast<double>(e.macs) / 1e8 << " x 1e8)\n";
  }
  os << "\nstorage";
  os << (report.quant ? " (" + report.quant->str() + ", bn float32)" : std::string(" (float32)"));
  os << ": " << std::fixed << std::setprecision(1) << report.storage.bytes() << " bytes = "
     << std::setprecision(2) << report.storage.bytes() / 1e6 << " MB\n";
  return os.str();
}

std::string format_csv(const CostReport& report) {
  std::ostringstream os;
  os << "layer,params,macs\n";
  for (const LayerCost& l : report.layers) {
    os << l.name << "," << l.params << "," << l.macs << "\n";
  }
  for (const ExitCost& e : report.exits) {
    os << "exit:" << e.name << "," << e.params << "," << e.macs << "\n";
  }
  os << "total," << report.total_params << "," << report.total_macs << "\n";
  os << "storage_bytes," << std::fixed << std::setprecision(1) << report.storage.bytes() << "\n";
  return os.str();
}

}  // namespace ccnn
