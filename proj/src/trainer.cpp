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


#include "ccnn/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ccnn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("batch_size must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0, 1)");
  if (!(initial_lr >= 0.0) || !std::isfinite(initial_lr)) {
    throw ParameterError("initial_lr must be finite and non-negative");
  }
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) {
    throw ParameterError("lr_decay_factor must be in (0, 1)");
  }
  if (plateau_patience < 1) throw ParameterError("plateau_patience must be at least 1");
  if (!(min_improvement >= 0.0)) throw ParameterError("min_improvement must be >= 0");
  if (!(min_lr >= 0.0)) throw ParameterError("min_lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be >= 0");
  for (double r : {dropout_final, dropout_mid}) {
    if (!(r >= 0.0 && r < 1.0)) throw ParameterError("dropout rates must be in [0, 1)");
  }
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw ParameterError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "momentum") c.momentum = value.get<double>();
      else if (key == "initial_lr") c.initial_lr = value.get<double>();
      else if (key == "lr_decay_factor") c.lr_decay_factor = value.get<double>();
      else if (key == "plateau_patience") c.plateau_patience = value.get<std::size_t>();
      else if (key == "min_improvement") c.min_improvement = value.get<double>();
      else if (key == "min_lr") c.min_lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "dropout_final") c.dropout_final = value.get<double>();
      else if (key == "dropout_mid") c.dropout_mid = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else throw ParameterError("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json() const {
  nlohmann::json j = {{"batch_size", batch_size},
                      {"momentum", momentum},
                      {"initial_lr", initial_lr},
                      {"lr_decay_factor", lr_decay_factor},
                      {"plateau_patience", plateau_patience},
                      {"min_improvement", min_improvement},
                      {"min_lr", min_lr},
                      {"weight_decay", weight_decay},
                      {"dropout_final", dropout_final},
                      {"dropout_mid", dropout_mid},
                      {"seed", seed},
                      {"max_epochs", max_epochs}};
  return j.dump(2);
}

const char* to_string(TrainStrategy s) {
  return s == TrainStrategy::MultiTask ? "multitask" : "separate";
}

TrainStrategy strategy_from_string(const std::string& s) {
  if (s == "multitask") return TrainStrategy::MultiTask;
  if (s == "separate") return TrainStrategy::Separate;
  throw ParameterError("unknown strategy '" + s + "' (multitask|separate)");
}

bool is_decayed(ParamRole role) {
  switch (role) {
    case ParamRole::ConvWeight:
    case ParamRole::LinearWeight:
    case ParamRole::GwapWeight:
    case ParamRole::BnGamma:
    case ParamRole::BnBeta:
      return true;
    default:
      return false;
  }
}

void sgd_step(Parameters<float>& params, const Gradients& grads, OptimizerState& state,
              const TrainConfig& config) {
  // Check everything before touching anything.
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw UsageError("gradient for unknown parameter " + name);
    const auto& e = params.entry(name);
    if (!is_trainable(e.role)) throw UsageError("gradient for non-trainable parameter " + name);
    if (g.shape() != e.value.shape()) {
      throw DimensionError("gradient shape " + shape_str(g.shape()) + " for " + name + " " +
                           shape_str(e.value.shape()));
    }
  }
  const float lr = static_cast<float>(state.lr);
  const float mom = static_cast<float>(config.momentum);
  for (const auto& [name, g] : grads) {
    auto& e = params.entry(name);
    Tensor<float>& w = e.value;
    auto [it, fresh] = state.velocity.try_emplace(name, w.shape());
    Tensor<float>& v = it->second;
    const float wd = is_decayed(e.role) ? static_cast<float>(config.weight_decay) : 0.0f;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = mom * v[i] - lr * (g[i] + wd * w[i]);
      w[i] += v[i];
    }
  }
}

bool lr_on_plateau(OptimizerState& state, double accuracy, const TrainConfig& config) {
  state.history.push_back(accuracy);
  if (accuracy > state.best + config.min_improvement) {
    state.best = accuracy;
    state.stale = 0;
    return false;
  }
  if (++state.stale < config.plateau_patience) return false;
  // Dividing by (1/f)^k keeps 0.1 -> 0.01 -> 0.001 exact in binary floating point.
  ++state.decays;
  state.lr = config.initial_lr / std::pow(1.0 / config.lr_decay_factor,
                                          static_cast<double>(state.decays));
  state.stale = 0;
  return true;
}

std::map<std::string, HeadEvaluation> evaluate_heads(const Network<float>& net,
                                                     const Dataset& data,
                                                     const std::vector<std::string>& exits,
                                                     std::size_t batch_size) {
  if (data.empty()) throw ParameterError("evaluate_heads: empty dataset");
  if (batch_size == 0) throw ParameterError("evaluate_heads: batch_size 0");
  std::vector<double> loss(exits.size(), 0.0);
  std::vector<std::size_t> correct(exits.size(), 0);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, idx.size() - start);
    std::span<const std::size_t> batch(idx.data() + start, n);
    const auto labels = data.labels(batch);
    Tape<float> tape;
    ForwardPass<float> pass(tape, net);
    auto outs = pass.run(pass.input(data.images(batch)), exits);
    for (std::size_t k = 0; k < exits.size(); ++k) {
      const Tensor<float>& logits = tape.value(outs[k]);
      loss[k] += static_cast<double>(softmax_cross_entropy(logits, labels).loss) * n;
      const std::size_t classes = logits.dim(1);
      for (std::size_t b = 0; b < n; ++b) {
        std::span<const float> row(logits.raw() + b * classes, classes);
        if (argmax(row) == labels[b]) ++correct[k];
      }
    }
  }
  std::map<std::string, HeadEvaluation> out;
  for (std::size_t k = 0; k < exits.size(); ++k) {
    out[exits[k]] = {loss[k] / data.size(), static_cast<double>(correct[k]) / data.size()};
  }
  return out;
}

namespace {

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  // Fisher-Yates with raw draws; std::shuffle differs across standard libraries.
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

Gradients collect_gradients(const Tape<float>& tape, const ForwardPass<float>& pass,
                            const Parameters<float>& params) {
  Gradients grads;
  for (const auto& [name, var] : pass.bound()) {
    if (!tape.requires_grad(var)) continue;
    const Tensor<float>& g = tape.grad(var);
    grads.emplace(name, g.empty() ? Tensor<float>(params.at(name).shape()) : g);
  }
  return grads;
}

void check_finite(double loss, std::size_t epoch, std::size_t batch, const std::string& what) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "training diverged: " << what << " loss is " << loss << " at epoch " << epoch
       << ", batch " << batch;
    throw DivergenceError(os.str());
  }
}

struct Phase {
  std::vector<std::string> exits;   // heads whose losses are summed
  std::vector<std::string> frozen;  // scopes held fixed
  // When set, batches start from cached features at this backbone depth.
  const BranchSpec* branch = nullptr;
};

class Trainer {
 public:
  Trainer(Network<float>& net, const Dataset& data, const Dataset& eval,
          const TrainConfig& config, const std::function<void(const EpochMetrics&)>& progress,
          std::vector<EpochMetrics>& metrics)
      : net_(net), data_(data), eval_(eval), config_(config), progress_(progress),
        metrics_(metrics), rng_(config.seed) {}

  void run(const Phase& phase) {
    OptimizerState state = OptimizerState::start(config_);
    Tensor<float> cached;
    if (phase.branch) cached = attach_features(*phase.branch);
    std::vector<std::size_t> order(data_.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t e = 0; e < config_.max_epochs; ++e) {
      if (state.lr < config_.min_lr) break;
      ++epoch_;
      shuffle(order, rng_);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        const std::size_t n = std::min(config_.batch_size, order.size() - start);
        std::span<const std::size_t> batch(order.data() + start, n);
        const auto labels = data_.labels(batch);
        Tape<float> tape;
        ForwardPass<float> pass(tape, net_, Mode::Train, &rng_);
        for (const auto& scope : phase.frozen) pass.freeze_scope(scope);
        std::vector<Var> logits;
        if (phase.branch) {
          logits.push_back(pass.branch(tape.leaf(gather(cached, batch)), *phase.branch));
        } else {
          logits = pass.run(pass.input(data_.images(batch)), phase.exits);
        }
        Var total;
        for (std::size_t k = 0; k < logits.size(); ++k) {
          Var l = ad::softmax_cross_entropy(tape, logits[k], labels);
          check_finite(tape.value(l)[0], epoch_, batches, phase.exits[k]);
          total = k == 0 ? l : ad::add(tape, total, l);
        }
        tape.backward(total);
        sgd_step(net_.parameters(), collect_gradients(tape, pass, net_.parameters()), state,
                 config_);
        loss_sum += tape.value(total)[0];
        ++batches;
      }

      const auto eval = evaluate_heads(net_, eval_, phase.exits);
      double acc = 0.0;
      for (const auto& exit : phase.exits) {
        const HeadEvaluation& h = eval.at(exit);
        check_finite(h.loss, epoch_, batches, exit + " evaluation");
        EpochMetrics m{epoch_, exit, h.loss, h.accuracy, state.lr, loss_sum / batches};
        metrics_.push_back(m);
        if (progress_) progress_(m);
        acc += h.accuracy;
      }
      lr_on_plateau(state, acc / phase.exits.size(), config_);
    }
  }

 private:
  // Frozen-backbone features at the branch attach point for every sample.
  Tensor<float> attach_features(const BranchSpec& b) {
    const std::size_t depth = backbone_index(net_.spec(), b.attach_after) + 1;
    Tensor<float> all;
    std::size_t per = 0;
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
      const std::size_t n = std::min(chunk, idx.size() - start);
      std::span<const std::size_t> batch(idx.data() + start, n);
      Tape<float> tape;
      ForwardPass<float> pass(tape, static_cast<const Network<float>&>(net_));
      const Tensor<float>& f = tape.value(pass.backbone(pass.input(data_.images(batch)), 0, depth));
      if (all.empty()) {
        per = f.size() / n;
        all = Tensor<float>({data_.size(), f.dim(1), f.dim(2), f.dim(3)});
      }
      std::copy(f.raw(), f.raw() + f.size(), all.raw() + start * per);
    }
    return all;
  }

  static Tensor<float> gather(const Tensor<float>& all, std::span<const std::size_t> batch) {
    const std::size_t per = all.size() / all.dim(0);
    Tensor<float> out({batch.size(), all.dim(1), all.dim(2), all.dim(3)});
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::copy(all.raw() + batch[i] * per, all.raw() + (batch[i] + 1) * per,
                out.raw() + i * per);
    }
    return out;
  }

  Network<float>& net_;
  const Dataset& data_;
  const Dataset& eval_;
  const TrainConfig& config_;
  const std::function<void(const EpochMetrics&)>& progress_;
  std::vector<EpochMetrics>& metrics_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
};

void check_dataset(const Network<float>& net, const Dataset& data, const char* what) {
  if (data.empty()) throw ParameterError(std::string(what) + " dataset is empty");
  data.validate();
  const NetworkSpec& spec = net.spec();
  const Shape want{spec.input_channels, spec.input_size, spec.input_size};
  if (data.samples.front().image.shape() != want) {
    throw DimensionError(std::string(what) + " images are " +
                         shape_str(data.samples.front().image.shape()) + ", network expects " +
                         shape_str(want));
  }
  if (data.num_classes > spec.num_classes) {
    throw DataError(std::string(what) + " dataset has " + std::to_string(data.num_classes) +
                    " classes, network has " + std::to_string(spec.num_classes));
  }
}

}  // namespace

TrainResult train(Network<float> net, const Dataset& data, const TrainConfig& config,
                  TrainStrategy strategy, const TrainOptions& options) {
  config.validate();
  if (!net.initialized()) throw UsageError("train: network has no parameters");
  check_dataset(net, data, "training");
  const Dataset* eval = options.eval;
  if (eval) check_dataset(net, *eval, "evaluation");

  net.set_dropout(kFinalHead, config.dropout_final);
  for (const auto& b : net.spec().branches) net.set_dropout(b.name, config.dropout_mid);

  TrainResult result;
  Trainer trainer(net, data, eval ? *eval : data, config, options.on_epoch, result.metrics);
  auto phase_end = [&](const std::string& phase) {
    if (options.on_phase_end) options.on_phase_end(phase, net);
  };
  if (strategy == TrainStrategy::MultiTask) {
    trainer.run({exit_names(net.spec()), {}, nullptr});
    phase_end("multitask");
  } else {
    trainer.run({{kFinalHead}, {}, nullptr});
    phase_end(kFinalHead);
    for (const auto& b : net.spec().branches) {
      trainer.run({{b.name}, {kBackboneScope, kFinalHead}, &b});
      phase_end(b.name);
    }
  }
  result.network = std::move(net);
  return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,head,loss,accuracy,lr\n" << std::setprecision(9);
  for (const auto& m : metrics) {
    os << m.epoch << ',' << m.head << ',' << m.loss << ',' << m.accuracy << ',' << m.lr << '\n';
  }
  return os.str();
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace ccnn
