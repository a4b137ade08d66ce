// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration: one JSON document merged over built-in defaults.
// Unknown keys and type mismatches are rejected. Relative paths resolve
// against the directory of the config file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/errors.hpp"
#include "kinfuse/kgstore.hpp"
#include "kinfuse/model.hpp"
#include "kinfuse/pipeline.hpp"
#include "kinfuse/trainer.hpp"

namespace kinfuse {

// Sweep ranges used for hyperparameter search; recorded, not enforced.
//   gnn.hidden_dim 2..512, gnn.output_dim 2..1024, align.dim 2..2048,
//   train.learning_rate 1e-10..1e-2, train.weight_decay 1e-8..1e-1,
//   align.mapping_layers 1..5, loss.lambda_kd 0..1.
inline nlohmann::json default_run_config() {
  return nlohmann::json::parse(R"({
    "seed": null,
    "workers": 1,
    "paths": {
      "kg": "",
      "store": "",
      "manifest": "",
      "node_embeddings": "",
      "grounded": "",
      "scores": "",
      "external_scores": "",
      "graphs": "",
      "checkpoint": "",
      "train_log": "",
      "metrics": "",
      "predictions": ""
    },
    "kg": {"raw_conceptnet": false, "language": "en", "min_weight": null},
    "graph": {"hops": 2, "k": 750, "max_nodes_per_hop": 2000, "scorer": "cosine", "fallback_empty": true},
    "model": {
      "use_graph": true,
      "gnn": {"arch": "rgcn", "layers": 2, "hidden_dim": 64, "output_dim": 64, "activation": "relu",
              "relation_norm": "mean", "num_bases": 0},
      "align": {"dim": 64, "mapping_layers": 1},
      "fusion": {"kind": "gated", "dim": 64, "han_levels": 2, "bilinear_mode": "factorized"}
    },
    "loss": {"lambda_bce": 0.5, "lambda_kd": 0.5, "num_classes": 2},
    "train": {"epochs": 30, "batch_size": 4, "learning_rate": 0.001, "warmup_fraction": 0.1,
              "weight_decay": 0.01, "grad_clip": 0.0, "threshold": 0.5},
    "eval": {"split": "test"}
  })");
}

namespace detail {

inline bool compatible(const nlohmann::json& def, const nlohmann::json& v) {
  if (def.is_null()) return v.is_null() || v.is_number();  // optional number
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_float()) return v.is_number();
  if (def.is_number_integer()) return v.is_number_integer();
  return false;
}

inline void merge_into(nlohmann::json& base, const nlohmann::json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError((prefix.empty() ? std::string("config") : prefix) + " must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key " + path);
    nlohmann::json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, path);
    } else if (key == "seed" && prefix.empty()) {
      if (!(value.is_null() || value.is_number_unsigned() ||
            (value.is_number_integer() && value.get<std::int64_t>() >= 0))) {
        throw ConfigError("seed must be a non-negative integer");
      }
      slot = value;
    } else {
      if (!compatible(slot, value)) {
        throw ConfigError("config key " + path + " expects a value like " + slot.dump() + ", got " + value.dump());
      }
      slot = value;
    }
  }
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() : tree_(default_run_config()) {}

  static RunConfig from_json(const nlohmann::json& user, std::filesystem::path base_dir = {}) {
    RunConfig c;
    detail::merge_into(c.tree_, user, "");
    c.base_dir_ = std::move(base_dir);
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream text;
    text << in.rdbuf();
    auto j = nlohmann::json::parse(text.str(), nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("config " + path + " is not valid JSON");
    return from_json(j, std::filesystem::path(path).parent_path());
  }

  // `a.b.c=value`; the value is parsed as JSON, falling back to a string.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    nlohmann::json patch = value;
    std::string::size_type end = key.size();
    while (true) {
      const auto dot = key.rfind('.', end - 1);
      const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                          end - (dot == std::string::npos ? 0 : dot + 1));
      if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
      patch = nlohmann::json{{part, patch}};
      if (dot == std::string::npos) break;
      end = dot;
    }
    detail::merge_into(tree_, patch, "");
  }

  const nlohmann::json& tree() const noexcept { return tree_; }
  const nlohmann::json& at(const std::string& dotted) const {
    return tree_.at(nlohmann::json::json_pointer("/" + replace_dots(dotted)));
  }

  std::optional<std::uint64_t> seed() const {
    if (tree_["seed"].is_null()) return std::nullopt;
    return tree_["seed"].get<std::uint64_t>();
  }

  std::uint64_t required_seed() const {
    auto s = seed();
    if (!s) throw ConfigError("seed is required for training; set it in the config or via --override seed=N");
    return *s;
  }

  std::size_t workers() const {
    const auto w = tree_["workers"].get<std::int64_t>();
    if (w < 1) throw ConfigError("workers must be >= 1");
    return static_cast<std::size_t>(w);
  }
  void set_workers(std::size_t n) { tree_["workers"] = n; }

  // Empty string when unset.
  std::string path(const std::string& name) const {
    const std::string p = at("paths." + name).get<std::string>();
    if (p.empty()) return p;
    const std::filesystem::path fp(p);
    return fp.is_absolute() || base_dir_.empty() ? p : (base_dir_ / fp).string();
  }

  std::string required_path(const std::string& name) const {
    std::string p = path(name);
    if (p.empty()) throw ConfigError("paths." + name + " must be set");
    return p;
  }

  IngestOptions ingest_options() const {
    IngestOptions o;
    o.language_filter = tree_["kg"]["language"].get<std::string>();
    if (!tree_["kg"]["min_weight"].is_null()) o.min_weight = tree_["kg"]["min_weight"].get<double>();
    o.raw_conceptnet = tree_["kg"]["raw_conceptnet"].get<bool>();
    return o;
  }
  void set_raw_conceptnet(bool v) { tree_["kg"]["raw_conceptnet"] = v; }

  GraphStageOptions graph_options() const {
    const auto& g = tree_["graph"];
    GraphStageOptions o;
    o.hops = g["hops"].get<int>();
    if (o.hops < 0 || o.hops > 2) throw ConfigError("graph.hops must be 0, 1 or 2");
    const auto k = g["k"].get<std::int64_t>();
    if (k < 1 || k > 5000) throw ConfigError("graph.k must lie in [1, 5000]");
    o.k = static_cast<std::size_t>(k);
    const auto cap = g["max_nodes_per_hop"].get<std::int64_t>();
    if (cap < 1) throw ConfigError("graph.max_nodes_per_hop must be >= 1");
    o.max_nodes_per_hop = static_cast<std::size_t>(cap);
    o.scorer = enum_from_string<ScorerKind>(g["scorer"].get<std::string>(), "graph.scorer");
    o.fallback_empty = g["fallback_empty"].get<bool>();
    o.workers = workers();
    return o;
  }

  LossConfig loss_config() const {
    const auto& l = tree_["loss"];
    LossConfig c;
    c.lambda_bce = l["lambda_bce"].get<double>();
    c.lambda_kd = l["lambda_kd"].get<double>();
    c.num_classes = l["num_classes"].get<int>();
    c.validate();
    return c;
  }

  // Dims not present in the config come from the data.
  ModelConfig model_config(const ManifestDims& dims, std::size_t node_dim, std::size_t num_relations) const {
    const auto& m = tree_["model"];
    ModelConfig c;
    c.use_graph = m["use_graph"].get<bool>();
    c.loss = loss_config();
    c.caption_dim = c.loss.kd_enabled() ? dims.caption : 0;
    const auto& g = m["gnn"];
    c.gnn.arch = enum_from_string<GnnArch>(g["arch"].get<std::string>(), "model.gnn.arch");
    c.gnn.layers = g["layers"].get<int>();
    c.gnn.input_dim = node_dim;
    c.gnn.hidden_dim = positive(g["hidden_dim"], "model.gnn.hidden_dim");
    c.gnn.output_dim = positive(g["output_dim"], "model.gnn.output_dim");
    c.gnn.activation = enum_from_string<Activation>(g["activation"].get<std::string>(), "model.gnn.activation");
    c.gnn.relation_norm =
        enum_from_string<RelationNorm>(g["relation_norm"].get<std::string>(), "model.gnn.relation_norm");
    c.gnn.num_bases = non_negative(g["num_bases"], "model.gnn.num_bases");
    c.gnn.num_relations = num_relations;
    const auto& a = m["align"];
    c.align.image_dim = dims.image;
    c.align.text_dim = dims.text;
    c.align.dim = positive(a["dim"], "model.align.dim");
    c.align.mapping_layers = a["mapping_layers"].get<int>();
    const auto& f = m["fusion"];
    c.fusion.kind = enum_from_string<FusionKind>(f["kind"].get<std::string>(), "model.fusion.kind");
    c.fusion.dim = positive(f["dim"], "model.fusion.dim");
    c.fusion.han_levels = f["han_levels"].get<int>();
    c.fusion.bilinear_mode =
        enum_from_string<BilinearMode>(f["bilinear_mode"].get<std::string>(), "model.fusion.bilinear_mode");
    if (c.use_graph && node_dim == 0) throw ConfigError("graph branch enabled but node feature dim is unknown");
    c.finalize();
    return c;
  }

  TrainConfig train_config() const {
    const auto& t = tree_["train"];
    TrainConfig c;
    c.epochs = t["epochs"].get<int>();
    const auto bs = t["batch_size"].get<std::int64_t>();
    if (bs < 1) throw ConfigError("train.batch_size must be >= 1");
    c.batch_size = static_cast<std::size_t>(bs);
    c.learning_rate = t["learning_rate"].get<double>();
    c.warmup_fraction = t["warmup_fraction"].get<double>();
    c.weight_decay = t["weight_decay"].get<double>();
    c.grad_clip = t["grad_clip"].get<double>();
    c.threshold = t["threshold"].get<double>();
    c.seed = seed().value_or(0);
    c.validate();
    return c;
  }

  std::string eval_split() const { return tree_["eval"]["split"].get<std::string>(); }

 private:
  static std::string replace_dots(std::string s) {
    for (char& c : s) {
      if (c == '.') c = '/';
    }
    return s;
  }
  static std::size_t positive(const nlohmann::json& v, const std::string& key) {
    if (v.get<std::int64_t>() < 1) throw ConfigError(key + " must be >= 1");
    return v.get<std::size_t>();
  }
  static std::size_t non_negative(const nlohmann::json& v, const std::string& key) {
    if (v.get<std::int64_t>() < 0) throw ConfigError(key + " must be >= 0");
    return v.get<std::size_t>();
  }

  nlohmann::json tree_;
  std::filesystem::path base_dir_;
};

}  // namespace kinfuse
