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


#include "ccnn/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "ccnn/cascade.hpp"
#include "ccnn/cost_model.hpp"
#include "ccnn/model_file.hpp"
#include "ccnn/spec_json.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn {
namespace fs = std::filesystem;

namespace {

std::size_t parse_count(std::string_view s, const std::string& source) {
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ParameterError("bad number '" + std::string(s) + "' in data source " + source);
  }
  return v;
}

Dataset load_synth(const std::string& source, std::size_t size) {
  std::string body = source.substr(6);
  std::uint64_t seed = 0;
  if (auto at = body.find('@'); at != std::string::npos) {
    seed = parse_count(std::string_view(body).substr(at + 1), source);
    body.resize(at);
  }
  std::size_t sep = body.find('x'), sep_len = 1;
  if (sep == std::string::npos) {
    sep = body.find("\xc3\x97");  // U+00D7
    sep_len = 2;
  }
  if (sep == std::string::npos) throw ParameterError("expected synth:KxN, got " + source);
  SynthOptions o;
  o.num_classes = parse_count(std::string_view(body).substr(0, sep), source);
  o.samples_per_class = parse_count(std::string_view(body).substr(sep + sep_len), source);
  o.seed = seed;
  o.size = size;
  return synth_glyphs(o);
}

// Pads to square and resamples when the stored size differs.
void fit_images(Dataset& d, std::size_t size) {
  for (Sample& s : d.samples) {
    if (s.image.dim(1) == size && s.image.dim(2) == size) continue;
    Tensor<float> plane = s.image.reshaped({s.image.dim(1), s.image.dim(2)});
    s.image = resize_bilinear(pad_to_square(plane), size, size).reshaped({1, size, size});
  }
}

Dataset load_gnt_files(const std::vector<std::string>& files, std::size_t size) {
  std::vector<std::vector<GntRecord>> all;
  std::map<std::uint16_t, std::size_t> classes;
  for (const auto& f : files) {
    all.push_back(read_gnt_records(f));
    for (const auto& r : all.back()) classes.emplace(r.tag, 0);
  }
  std::size_t next = 0;
  for (auto& [tag, index] : classes) index = next++;
  Dataset d;
  d.num_classes = classes.size();
  for (std::size_t k = 0; k < files.size(); ++k) {
    for (std::size_t i = 0; i < all[k].size(); ++i) {
      Sample s = gnt_sample(all[k][i], classes.at(all[k][i].tag), size);
      s.source_id = files[k] + "#" + std::to_string(i);
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

std::string normalize_head(std::string head) {
  std::replace(head.begin(), head.end(), '-', '_');
  return head;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

NetworkSpec resolve_spec(const std::string& spec, std::size_t classes, std::size_t divisor,
                         bool branches, const std::string& head) {
  if (spec == "default") {
    if (classes == 0) throw ParameterError("--classes must be positive");
    return default_network_spec(classes, divisor, branches, head_kind_from_string(head));
  }
  return spec_from_json(read_text(spec));
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v << "%";
  return os.str();
}

std::vector<double> parse_thresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ParameterError("bad threshold '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError("no thresholds given");
  return out;
}

void print_cost(std::ostream& out, const NetworkSpec& spec, const std::optional<QuantScheme>& q,
                bool csv) {
  const CostReport report = network_cost(spec, q);
  if (csv) {
    out << format_csv(report);
  } else {
    out << format_table(report);
  }
}

}  // namespace

Dataset load_dataset(const std::string& source, std::size_t input_size) {
  if (source.rfind("synth:", 0) == 0) return load_synth(source, input_size);
  Dataset d;
  if (source.rfind("idx:", 0) == 0) {
    const auto comma = source.find(',');
    if (comma == std::string::npos) throw ParameterError("expected idx:<images>,<labels>");
    d = read_idx(source.substr(4, comma - 4), source.substr(comma + 1));
  } else if (fs::is_directory(source)) {
    std::vector<std::string> gnt, images, labels;
    for (const auto& entry : fs::directory_iterator(source)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (entry.path().extension() == ".gnt") gnt.push_back(entry.path().string());
      else if (name.find("images") != std::string::npos) images.push_back(entry.path().string());
      else if (name.find("labels") != std::string::npos) labels.push_back(entry.path().string());
    }
    std::sort(gnt.begin(), gnt.end());
    if (!gnt.empty()) return load_gnt_files(gnt, input_size);
    if (images.size() != 1 || labels.size() != 1) {
      throw DataError(source + ": expected .gnt files or one *images* and one *labels* file");
    }
    d = read_idx(images[0], labels[0]);
  } else if (fs::path(source).extension() == ".gnt") {
    return load_gnt_files({source}, input_size);
  } else {
    throw DataError("unrecognized data source '" + source + "'");
  }
  fit_images(d, input_size);
  return d;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compact fire-module CNN with cascaded early exits", "ccnn"};
  app.require_subcommand(1);

  // cost-report
  auto* cost = app.add_subcommand("cost-report", "Parameter, MAC and storage accounting");
  std::string cost_spec = "default", cost_head = "wap", cost_quant;
  std::size_t cost_classes = 3755, cost_divisor = 1;
  bool cost_no_branches = false, cost_csv = false;
  cost->add_option("--spec", cost_spec, "Spec JSON file, or 'default'")->capture_default_str();
  cost->add_option("--classes", cost_classes, "Classes for the default spec")->capture_default_str();
  cost->add_option("--width-divisor", cost_divisor, "Channel divisor for the default spec")
      ->capture_default_str();
  cost->add_option("--head", cost_head, "Final head: wap, gap or fc")->capture_default_str();
  cost->add_flag("--no-branches", cost_no_branches, "Default spec without mid exits");
  cost->add_option("--quant", cost_quant, "Bit widths, e.g. conv=8,fc=4,gwap=8");
  cost->add_flag("--csv", cost_csv, "Machine-readable layer,params,macs lines");

  // train
  auto* tr = app.add_subcommand("train", "Train a network");
  std::string tr_data, tr_strategy = "separate", tr_config, tr_out, tr_spec = "default",
                       tr_metrics, tr_eval, tr_head = "wap";
  std::size_t tr_classes = 0, tr_divisor = 1;
  tr->add_option("--data", tr_data, "Training data source")->required();
  tr->add_option("--strategy", tr_strategy, "multitask or separate")->capture_default_str();
  tr->add_option("--config", tr_config, "Training config JSON");
  tr->add_option("--out", tr_out, "Model file to write")->required();
  tr->add_option("--spec", tr_spec, "Spec JSON file, or 'default'")->capture_default_str();
  tr->add_option("--classes", tr_classes, "Classes (default: from the data)");
  tr->add_option("--width-divisor", tr_divisor, "Channel divisor for the default spec")
      ->capture_default_str();
  tr->add_option("--head", tr_head, "Final head for the default spec")->capture_default_str();
  tr->add_option("--metrics", tr_metrics, "Per-epoch metrics CSV");
  tr->add_option("--eval-data", tr_eval, "Evaluation data for metrics and the lr schedule");

  // eval
  auto* ev = app.add_subcommand("eval", "Per-head accuracy");
  std::string ev_model, ev_data, ev_head = "all";
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Data source")->required();
  ev->add_option("--head", ev_head, "mid-a, mid-b, final or all")->capture_default_str();

  // cascade
  auto* cas = app.add_subcommand("cascade", "Threshold-gated early-exit inference");
  std::string cas_model, cas_data, cas_thresholds = "0.98", cas_trace, cas_exit = "mid-a";
  bool cas_no_fuse = false;
  cas->add_option("--model", cas_model, "Model file")->required();
  cas->add_option("--data", cas_data, "Data source")->required();
  cas->add_option("--threshold", cas_thresholds, "Threshold or comma-separated sweep")
      ->capture_default_str();
  cas->add_option("--exit-head", cas_exit, "Gating head")->capture_default_str();
  cas->add_flag("--no-fuse", cas_no_fuse, "Late path uses the final head alone");
  cas->add_option("--trace", cas_trace, "Per-sample CSV (last threshold)");

  // quantize
  auto* qz = app.add_subcommand("quantize", "Weight-only fixed-point quantization");
  std::string qz_model, qz_out, qz_bits = "conv=8,fc=4,gwap=8";
  qz->add_option("--model", qz_model, "Float model file")->required();
  qz->add_option("--out", qz_out, "Quantized model file")->required();
  qz->add_option("--bits", qz_bits, "Bit widths per bucket")->capture_default_str();

  // inspect
  auto* in = app.add_subcommand("inspect", "Describe a model file");
  std::string in_model;
  bool in_json = false;
  in->add_option("--model", in_model, "Model file")->required();
  in->add_flag("--spec-json", in_json, "Print the full spec JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*cost) {
      std::optional<QuantScheme> q;
      if (!cost_quant.empty()) q = QuantScheme::parse(cost_quant);
      print_cost(out,
                 resolve_spec(cost_spec, cost_classes, cost_divisor, !cost_no_branches, cost_head),
                 q, cost_csv);
    } else if (*tr) {
      tune_allocator();
      TrainConfig config;
      if (!tr_config.empty()) config = TrainConfig::from_json(read_text(tr_config));
      const TrainStrategy strategy = strategy_from_string(tr_strategy);
      // The data source decides the image size only for synth data; use the
      // spec's size when a file spec is given.
      NetworkSpec probe = tr_spec == "default" ? NetworkSpec{} : spec_from_json(read_text(tr_spec));
      const std::size_t size = tr_spec == "default" ? 64 : probe.input_size;
      Dataset data = load_dataset(tr_data, size);
      const NetworkSpec spec =
          tr_spec == "default"
              ? default_network_spec(tr_classes ? tr_classes : data.num_classes, tr_divisor, true,
                                     head_kind_from_string(tr_head))
              : probe;
      std::optional<Dataset> eval;
      if (!tr_eval.empty()) eval = load_dataset(tr_eval, spec.input_size);
      TrainOptions opt;
      opt.eval = eval ? &*eval : nullptr;
      opt.on_epoch = [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << "  " << std::left << std::setw(6) << m.head
            << " loss " << std::setprecision(4) << m.loss << "  acc " << percent(m.accuracy)
            << "  lr " << m.lr << std::endl;
      };
      auto result = train(Network<float>::build(spec, config.seed), data, config, strategy, opt);
      if (!tr_metrics.empty()) {
        std::ofstream mf(tr_metrics);
        if (!mf) throw DataError("cannot write " + tr_metrics);
        mf << metrics_csv(result.metrics);
      }
      save_model(tr_out, result.network);
      out << "saved " << tr_out << "\n";
    } else if (*ev) {
      const Network<float> net = load_model(ev_model).network();
      const Dataset data = load_dataset(ev_data, net.spec().input_size);
      std::vector<std::string> heads = ev_head == "all" ? exit_names(net.spec())
                                                        : std::vector{normalize_head(ev_head)};
      for (const auto& h : heads) {
        if (h != kFinalHead) find_branch(net.spec(), h);
      }
      const auto result = evaluate_heads(net, data, heads);
      out << std::left << std::setw(8) << "head" << std::setw(10) << "accuracy" << "loss\n";
      for (const auto& h : heads) {
        out << std::setw(8) << h << std::setw(10) << percent(result.at(h).accuracy)
            << std::setprecision(5) << result.at(h).loss << "\n";
      }
    } else if (*cas) {
      const Network<float> net = load_model(cas_model).network();
      const Dataset data = load_dataset(cas_data, net.spec().input_size);
      CascadePolicy policy;
      policy.exit_head = normalize_head(cas_exit);
      policy.fuse_late = !cas_no_fuse;
      const auto thresholds = parse_thresholds(cas_thresholds);
      out << std::left << std::setw(11) << "threshold" << std::setw(12) << "early_exit"
          << std::setw(10) << "accuracy" << std::setw(12) << "early_acc" << std::setw(10)
          << "late_acc" << std::setw(14) << "mean_macs" << "mac_saving\n";
      // Savings are measured against running the final exit alone.
      const double baseline = static_cast<double>(network_cost(net.spec()).exit(kFinalHead).macs);
      std::vector<CascadeResult> trace;
      for (double t : thresholds) {
        policy.threshold = t;
        const CascadeStats s = cascade_eval(data, net, policy, &trace);
        out << std::setw(11) << t << std::setw(12) << s.early_exit_fraction() << std::setw(10)
            << percent(s.accuracy()) << std::setw(12) << percent(s.early_accuracy())
            << std::setw(10) << percent(s.late_accuracy()) << std::setw(14)
            << with_thousands(static_cast<std::uint64_t>(std::llround(s.mean_mac_cost())))
            << percent(1.0 - s.mean_mac_cost() / baseline) << "\n";
      }
      if (!cas_trace.empty()) {
        std::ofstream tf(cas_trace);
        if (!tf) throw DataError("cannot write " + cas_trace);
        tf << cascade_trace_csv(data, trace, policy);
      }
    } else if (*qz) {
      const QuantScheme scheme = QuantScheme::parse(qz_bits);
      const ModelFile src = load_model(qz_model);
      if (src.quant) throw UsageError(qz_model + " is already quantized");
      const Network<float> net = src.network();
      save_model(qz_out, net, scheme);
      const double before = quantized_storage(net.parameters(), QuantScheme::float32()).bytes();
      const double after = quantized_storage(net.parameters(), scheme).bytes();
      out << "quantized " << scheme.str() << ": " << with_thousands(std::llround(before))
          << " -> " << with_thousands(std::llround(after)) << " bytes of weights\n"
          << "saved " << qz_out << "\n";
    } else if (*in) {
      const ModelFile m = load_model(in_model);
      const NetworkSpec& spec = m.spec;
      if (in_json) {
        out << spec_to_json(spec, 2) << "\n";
        return 0;
      }
      std::size_t params = 0, quantized = 0;
      std::map<std::string, std::size_t> encodings;
      for (const auto& p : m.params) {
        const std::size_t n = p.quantized()
                                  ? std::get<QuantizedTensor>(p.payload).codes.size()
                                  : std::get<Tensor<float>>(p.payload).size();
        params += n;
        std::string enc = "float32";
        if (p.quantized()) {
          enc = "int" + std::to_string(std::get<QuantizedTensor>(p.payload).bits);
          quantized += n;
        }
        encodings[enc] += n;
      }
      out << "file        " << in_model << " (" << with_thousands(fs::file_size(in_model))
          << " bytes)\n"
          << "input       " << spec.input_channels << "x" << spec.input_size << "x"
          << spec.input_size << "\n"
          << "classes     " << spec.num_classes << "\n"
          << "head        " << to_string(spec.head.kind) << "\n"
          << "exits       ";
      for (const auto& e : exit_names(spec)) out << e << " ";
      out << "\nlayers      ";
      for (const auto& l : spec.backbone) out << layer_name(l) << " ";
      out << "\nquant       " << (m.quant ? m.quant->str() : "none") << "\n"
          << "tensors     " << m.params.size() << "\n"
          << "parameters  " << with_thousands(params) << "\n";
      for (const auto& [enc, n] : encodings) {
        out << "  " << std::left << std::setw(10) << enc << with_thousands(n) << "\n";
      }
      const auto costs = network_cost(spec);
      for (const auto& e : costs.exits) {
        out << "exit " << std::setw(7) << e.name << with_thousands(e.macs) << " MACs\n";
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ccnn
