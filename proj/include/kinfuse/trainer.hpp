// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop (AdamW, warm-up + linear decay, validation-based selection),
// checkpoints, and evaluation.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/binary_io.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/metrics.hpp"
#include "kinfuse/model.hpp"
#include "kinfuse/optim.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 4;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // 0 disables clipping
  double threshold = 0.5;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("train.learning_rate must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
      throw ConfigError("train.warmup_fraction must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: magic, u64 header length, JSON header, float32 tensor payload.

struct Checkpoint {
  static constexpr int kFormatVersion = 1;
  static constexpr std::array<char, 8> kMagic = {'K', 'F', 'C', 'K', 'P', 'T', '0', '1'};

  ModelConfig model_config;
  nlohmann::json run_config = nullptr;
  std::string metric_name;
  double metric_value = 0.0;
  int epoch = 0;
  std::map<std::string, Tensor> tensors;  // values are exactly float32-representable

  // Snapshot of the model's parameters, rounded to float32 so that the
  // in-memory checkpoint and its serialized form are the same numbers.
  static Checkpoint capture(const Model& model) {
    Checkpoint c;
    c.model_config = model.config();
    for (const auto& [name, p] : model.params()) {
      Tensor t = p.value;
      for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
      c.tensors.emplace(name, std::move(t));
    }
    return c;
  }

  bool has_tensor(const std::string& name) const { return tensors.count(name) != 0; }

  Model instantiate() const {
    Model model(model_config);
    model.init(0);
    for (auto& [name, p] : model.params()) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError("checkpoint lacks parameter " + name);
      if (!it->second.same_shape(p.value)) throw DataError("checkpoint parameter " + name + " has the wrong shape");
      p.value = it->second;
    }
    if (model.params().size() != tensors.size()) {
      throw DataError("checkpoint holds parameters the model does not define");
    }
    return model;
  }

  void save(std::ostream& os) const {
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      index.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
      offset += t.size();
    }
    const nlohmann::json header = {{"format_version", kFormatVersion},
                                   {"model_config", to_json(model_config)},
                                   {"run_config", run_config},
                                   {"metric", {{"name", metric_name}, {"value", metric_value}}},
                                   {"epoch", epoch},
                                   {"tensors", index}};
    const std::string text = header.dump();
    os.write(kMagic.data(), kMagic.size());
    binio::write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      for (double v : t.data()) binio::write_f32(os, static_cast<float>(v));
    }
    if (!os) throw DataError("failed writing checkpoint");
  }

  std::string bytes() const {
    std::ostringstream os(std::ios::binary);
    save(os);
    return os.str();
  }

  static Checkpoint load(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw DataError("not a checkpoint (bad magic)");
    const std::uint64_t len = binio::read_u64(is);
    if (len > (1ull << 30)) throw DataError("checkpoint header length is implausible");
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated checkpoint header");
    auto header = nlohmann::json::parse(text, nullptr, false);
    if (header.is_discarded()) throw DataError("checkpoint header is not JSON");
    if (header.value("format_version", 0) != kFormatVersion) throw DataError("unsupported checkpoint version");
    Checkpoint c;
    c.model_config = model_config_from_json(header.at("model_config"));
    c.run_config = header.at("run_config");
    c.metric_name = header.at("metric").at("name").get<std::string>();
    c.metric_value = header.at("metric").at("value").get<double>();
    c.epoch = header.at("epoch").get<int>();
    std::uint64_t expected = 0;
    for (const auto& e : header.at("tensors")) {
      if (e.at("offset").get<std::uint64_t>() != expected) throw DataError("checkpoint tensor index is not contiguous");
      Tensor t(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>());
      for (double& v : t.data()) v = static_cast<double>(binio::read_f32(is));
      expected += t.size();
      c.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
    }
    return c;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    save(os);
  }

  static Checkpoint load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    return load(is);
  }
};

// ---------------------------------------------------------------------------
// Evaluation

struct Predictions {
  std::vector<double> positive_probability;  // binary
  std::vector<int> predicted_class;
  std::vector<int> labels;
};

inline Predictions predict_all(Model& model, std::span<const Example> examples, double threshold = 0.5) {
  Predictions out;
  for (const Example& ex : examples) {
    const std::vector<double> p = model.predict(ex);
    if (p.size() == 1) {
      out.positive_probability.push_back(p[0]);
      out.predicted_class.push_back(p[0] >= threshold ? 1 : 0);
    } else {
      out.predicted_class.push_back(
          static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    out.labels.push_back(ex.label);
  }
  return out;
}

inline MetricsReport evaluate(Model& model, std::span<const Example> examples, double threshold = 0.5) {
  const Predictions p = predict_all(model, examples, threshold);
  if (model.config().loss.num_classes == 2) {
    return classification_metrics(p.positive_probability, p.labels, threshold);
  }
  return multiclass_metrics(p.predicted_class, p.labels, model.config().loss.num_classes);
}

// Validation AUC for binary tasks, weighted F1 otherwise.
inline std::pair<std::string, double> selection_metric(const MetricsReport& r) {
  if (r.averaging == "binary") {
    if (!r.auc) throw DataError("validation split needs both classes to compute AUC");
    return {"val_auc", *r.auc};
  }
  return {"val_weighted_f1", r.f1};
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double classification = 0.0;
  double kd = 0.0;
  double lr = 0.0;
  std::size_t steps = 0;
  MetricsReport val;
  std::string metric_name;
  double metric_value = 0.0;
};

inline nlohmann::json to_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},
          {"loss", e.loss},
          {"classification_loss", e.classification},
          {"kd_loss", e.kd},
          {"lr", e.lr},
          {"steps", e.steps},
          {"val", to_json(e.val)},
          {"selection", {{"name", e.metric_name}, {"value", e.metric_value}}}};
}

struct FitResult {
  Checkpoint best;
  std::vector<EpochRecord> epochs;
};

// Trains `model` in place from its current parameters. Gradients of the
// records in a batch are summed in batch order, then one optimizer step is
// taken. The returned checkpoint is the epoch with the highest selection
// metric, earliest epoch on ties.
inline FitResult fit(Model& model, std::span<const Example> train, std::span<const Example> val,
                     const TrainConfig& config,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  config.validate();
  if (train.empty()) throw DataError("training split is empty");
  if (val.empty()) throw DataError("validation split is empty");

  const std::size_t steps_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(config.epochs);
  AdamW optimizer(AdamWConfig{0.9, 0.999, 1e-8, config.weight_decay});
  Rng order_rng(config.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  std::optional<double> best;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      model.params().zero_grad();
      const std::size_t first = b * config.batch_size;
      const std::size_t last = std::min(train.size(), first + config.batch_size);
      try {
        for (std::size_t i = first; i < last; ++i) {
          const Example& ex = train[order[i]];
          Tape tape;
          const ForwardResult f = model.forward(tape, ex, true);
          tape.backward(f.loss);
          tape.accumulate_parameter_gradients();
          rec.loss += f.loss.value().item();
          rec.classification += f.classification.value().item();
          if (f.kd.valid()) rec.kd += f.kd.value().item();
        }
        if (config.grad_clip > 0.0) clip_grad_norm(model.params(), config.grad_clip);
        rec.lr = lr_schedule(step, total_steps, config.warmup_fraction, config.learning_rate);
        optimizer.step(model.params(), rec.lr);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what());
      }
      ++step;
    }
    const double n = static_cast<double>(train.size());
    rec.loss /= n;
    rec.classification /= n;
    rec.kd /= n;
    rec.steps = step;
    rec.val = evaluate(model, val, config.threshold);
    std::tie(rec.metric_name, rec.metric_value) = selection_metric(rec.val);
    if (!best || rec.metric_value > *best) {
      best = rec.metric_value;
      result.best = Checkpoint::capture(model);
      result.best.metric_name = rec.metric_name;
      result.best.metric_value = rec.metric_value;
      result.best.epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    result.epochs.push_back(std::move(rec));
  }
  return result;
}

}  // namespace kinfuse
