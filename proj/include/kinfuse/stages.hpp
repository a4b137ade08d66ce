// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// CLI stages as library calls. Each reads its inputs from the run config's
// paths and writes one artifact; stdout summaries are returned as JSON.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/config.hpp"
#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/kgstore.hpp"
#include "kinfuse/metrics.hpp"
#include "kinfuse/pipeline.hpp"
#include "kinfuse/synthetic.hpp"
#include "kinfuse/trainer.hpp"

namespace kinfuse {

namespace detail {

inline ManifestOptions manifest_options(const RunConfig& cfg, bool need_caption) {
  ManifestOptions o;
  o.require_caption = need_caption;
  o.num_classes = cfg.loss_config().num_classes;
  return o;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace detail

inline nlohmann::json stage_kg_ingest(const RunConfig& cfg) {
  IngestReport report;
  const KnowledgeStore store = ingest_file(cfg.required_path("kg"), cfg.ingest_options(), &report);
  store.save_file(cfg.required_path("store"));
  nlohmann::json j;
  to_json(j, report);
  return j;
}

inline nlohmann::json stage_ground(const RunConfig& cfg) {
  const KnowledgeStore store = KnowledgeStore::load_file(cfg.required_path("store"));
  const Manifest m = load_manifest(cfg.required_path("manifest"), detail::manifest_options(cfg, false));
  const auto grounded = ground_manifest(m, store, cfg.workers());
  write_grounded(cfg.required_path("grounded"), grounded, store);
  std::size_t mentions = 0, without = 0;
  for (const auto& g : grounded) {
    mentions += g.mentions.size();
    if (g.mentions.empty()) ++without;
  }
  return {{"records", grounded.size()}, {"mentions", mentions}, {"records_without_mentions", without}};
}

inline nlohmann::json stage_score_relevance(const RunConfig& cfg) {
  const KnowledgeStore store = KnowledgeStore::load_file(cfg.required_path("store"));
  const NodeEmbeddingTable table = load_node_embeddings(cfg.required_path("node_embeddings"));
  const Manifest m = load_manifest(cfg.required_path("manifest"), detail::manifest_options(cfg, false));
  const auto grounded = load_grounded(cfg.required_path("grounded"), store);
  const auto scores = score_manifest(m, grounded, store, table, cfg.graph_options());
  write_scores(cfg.required_path("scores"), scores, store);
  std::size_t lines = 0;
  for (const auto& s : scores) lines += s.scores.nodes.size();
  return {{"records", scores.size()}, {"scores", lines}};
}

inline nlohmann::json stage_build_graphs(const RunConfig& cfg) {
  const GraphStageOptions opt = cfg.graph_options();
  const KnowledgeStore store = KnowledgeStore::load_file(cfg.required_path("store"));
  const NodeEmbeddingTable table = load_node_embeddings(cfg.required_path("node_embeddings"));
  const Manifest m = load_manifest(cfg.required_path("manifest"), detail::manifest_options(cfg, false));
  const auto grounded = load_grounded(cfg.required_path("grounded"), store);
  std::optional<ExternalScores> external;
  if (opt.scorer == ScorerKind::perplexity) external = ExternalScores::load(cfg.required_path("external_scores"));
  const auto graphs = build_graphs(m, grounded, store, table, external ? &*external : nullptr, opt);
  write_graphs(cfg.required_path("graphs"), graphs, store);
  std::size_t nodes = 0, edges = 0;
  for (const auto& g : graphs) {
    nodes += g.node_count();
    edges += g.edges.size();
  }
  return {{"graphs", graphs.size()}, {"nodes", nodes}, {"edges", edges}};
}

// Examples for `split` (all records when empty) plus the dims the model needs.
struct LoadedData {
  Manifest manifest;
  GraphFile graphs;
  std::size_t node_dim = 0;
};

inline LoadedData load_data(const RunConfig& cfg, bool use_graph, bool need_caption) {
  LoadedData d;
  d.manifest = load_manifest(cfg.required_path("manifest"), detail::manifest_options(cfg, need_caption));
  if (use_graph) {
    d.graphs = load_graphs(cfg.required_path("graphs"));
    if (!d.graphs.graphs.empty()) d.node_dim = d.graphs.graphs.begin()->second->features.cols();
  }
  return d;
}

struct TrainOutcome {
  FitResult fit;
  std::string log;  // JSON lines, one per epoch
};

// Trains from the config alone; the seed is mandatory.
inline TrainOutcome train_from_config(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.required_seed();
  const TrainConfig tc = cfg.train_config();
  const LossConfig loss = cfg.loss_config();
  const bool use_graph = cfg.tree()["model"]["use_graph"].get<bool>();
  const LoadedData d = load_data(cfg, use_graph, loss.kd_enabled());
  const GraphMap* graphs = use_graph ? &d.graphs.graphs : nullptr;
  const auto train = make_examples(d.manifest, "train", graphs, loss.kd_enabled());
  const auto val = make_examples(d.manifest, "val", graphs, false);
  Model model(cfg.model_config(d.manifest.dims, d.node_dim, d.graphs.relations.size()));
  model.init(seed);
  TrainOutcome out;
  std::ostringstream log;
  out.fit = fit(model, train, val, tc, [&](const EpochRecord& e) { log << to_json(e).dump() << '\n'; });
  out.fit.best.run_config = cfg.tree();
  out.log = log.str();
  return out;
}

inline nlohmann::json stage_train(const RunConfig& cfg) {
  const std::string checkpoint = cfg.required_path("checkpoint");
  const TrainOutcome t = train_from_config(cfg);
  t.fit.best.save_file(checkpoint);
  if (const std::string log = cfg.path("train_log"); !log.empty()) detail::write_text(log, t.log);
  return {{"best_epoch", t.fit.best.epoch},
          {"selection", {{"name", t.fit.best.metric_name}, {"value", t.fit.best.metric_value}}},
          {"final_loss", t.fit.epochs.back().loss},
          {"checkpoint", checkpoint}};
}

// The config must agree with what the checkpoint was trained for.
inline void check_checkpoint_compatible(const RunConfig& cfg, const Checkpoint& ck) {
  const LossConfig loss = cfg.loss_config();
  if (loss.kd_enabled() && !ck.has_tensor(kKdProjection)) {
    std::ostringstream msg;
    msg << "config sets loss.lambda_kd=" << loss.lambda_kd << " but the checkpoint has no " << kKdProjection
        << " (it was trained with lambda_kd=" << ck.model_config.loss.lambda_kd << ")";
    throw ConfigError(msg.str());
  }
  const bool use_graph = cfg.tree()["model"]["use_graph"].get<bool>();
  if (use_graph != ck.model_config.use_graph) {
    throw ConfigError(std::string("config sets model.use_graph=") + (use_graph ? "true" : "false") +
                      " but the checkpoint was trained with use_graph=" +
                      (ck.model_config.use_graph ? "true" : "false"));
  }
  if (loss.num_classes != ck.model_config.loss.num_classes) {
    throw ConfigError("config sets loss.num_classes=" + std::to_string(loss.num_classes) +
                      " but the checkpoint has " + std::to_string(ck.model_config.loss.num_classes));
  }
}

// Loads the checkpoint and inference examples; never reads captions.
struct InferenceInputs {
  Checkpoint checkpoint;
  std::vector<Example> examples;
};

inline InferenceInputs inference_inputs(const RunConfig& cfg, const std::string& split) {
  InferenceInputs in;
  in.checkpoint = Checkpoint::load_file(cfg.required_path("checkpoint"));
  check_checkpoint_compatible(cfg, in.checkpoint);
  const bool use_graph = in.checkpoint.model_config.use_graph;
  const LoadedData d = load_data(cfg, use_graph, false);
  if (use_graph && d.graphs.relations.size() != in.checkpoint.model_config.gnn.num_relations) {
    throw DataError("working graphs have " + std::to_string(d.graphs.relations.size()) +
                    " relations, the checkpoint expects " +
                    std::to_string(in.checkpoint.model_config.gnn.num_relations));
  }
  in.examples = make_examples(d.manifest, split, use_graph ? &d.graphs.graphs : nullptr, false);
  if (in.examples.empty()) throw DataError("no records in split '" + split + "'");
  return in;
}

inline MetricsReport stage_eval(const RunConfig& cfg) {
  InferenceInputs in = inference_inputs(cfg, cfg.eval_split());
  Model model = in.checkpoint.instantiate();
  const MetricsReport report = evaluate(model, in.examples, cfg.train_config().threshold);
  if (const std::string path = cfg.path("metrics"); !path.empty()) {
    detail::write_text(path, to_json(report).dump(2) + "\n");
  }
  return report;
}

// One JSON line per record: probability (binary) or probabilities, and the
// predicted class. Records of the eval split, or all when it is empty.
inline std::string stage_predict(const RunConfig& cfg) {
  InferenceInputs in = inference_inputs(cfg, cfg.eval_split());
  Model model = in.checkpoint.instantiate();
  const double threshold = cfg.train_config().threshold;
  std::ostringstream out;
  for (const Example& ex : in.examples) {
    const std::vector<double> p = model.predict(ex);
    nlohmann::json j = {{"record_id", ex.id}};
    if (p.size() == 1) {
      j["probability"] = p[0];
      j["predicted"] = p[0] >= threshold ? 1 : 0;
    } else {
      j["probabilities"] = p;
      j["predicted"] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    }
    out << j.dump() << '\n';
  }
  if (const std::string path = cfg.path("predictions"); !path.empty()) detail::write_text(path, out.str());
  return out.str();
}

// Config for a synthetic dataset directory, holding the desk-scale settings
// used by the acceptance experiment. Paths are relative to the directory.
inline nlohmann::json synthetic_run_config(std::uint64_t seed) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "paths": {
      "kg": "kg.tsv", "store": "kg.store", "manifest": "manifest.jsonl",
      "node_embeddings": "node_embeddings.txt", "grounded": "grounded.jsonl",
      "scores": "scores.jsonl", "graphs": "graphs.jsonl", "checkpoint": "model.ckpt",
      "train_log": "train_log.jsonl", "metrics": "metrics.json", "predictions": "predictions.jsonl"
    },
    "graph": {"hops": 1, "k": 50},
    "model": {
      "gnn": {"hidden_dim": 16, "output_dim": 16},
      "align": {"dim": 16},
      "fusion": {"dim": 16}
    },
    "train": {"epochs": 30, "learning_rate": 0.003}
  })");
  j["seed"] = seed;
  return j;
}

inline void write_synthetic_run(const SyntheticConfig& sc, std::uint64_t seed, const std::filesystem::path& dir) {
  const nlohmann::json j = synthetic_run_config(seed);
  RunConfig::from_json(j);  // validates against the defaults
  write_synthetic(make_synthetic(sc), dir);
  detail::write_text((dir / "config.json").string(), j.dump(2) + "\n");
}

}  // namespace kinfuse
