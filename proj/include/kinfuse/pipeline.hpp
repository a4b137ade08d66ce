// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Per-record pipeline stages: grounding, candidate scoring, working-graph
// construction and example assembly. Each stage has a JSON-lines artifact.

#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/graphbuild.hpp"
#include "kinfuse/kgstore.hpp"
#include "kinfuse/model.hpp"
#include "kinfuse/parallel.hpp"
#include "kinfuse/relevance.hpp"

namespace kinfuse {

enum class ScorerKind { cosine, perplexity };

template <>
struct EnumNames<ScorerKind> {
  static constexpr std::pair<ScorerKind, const char*> values[] = {{ScorerKind::cosine, "cosine"},
                                                                   {ScorerKind::perplexity, "perplexity"}};
};

inline ScoreDirection direction_of(ScorerKind k) {
  return k == ScorerKind::cosine ? ScoreDirection::higher_is_better : ScoreDirection::lower_is_better;
}

struct GraphStageOptions {
  int hops = 2;
  std::size_t k = 750;
  std::size_t max_nodes_per_hop = kDefaultMaxNodesPerHop;
  ScorerKind scorer = ScorerKind::cosine;
  bool fallback_empty = true;
  std::size_t workers = 1;
};

// ---------------------------------------------------------------------------
// Grounding

struct GroundedRecord {
  std::string record_id;
  std::vector<GroundedMention> mentions;
};

inline GroundedRecord ground_record(const MemeRecord& r, const KnowledgeStore& store) {
  GroundedRecord g{r.id, ground(r.text, store, MentionSource::meme_text)};
  auto from_caption = ground(r.caption, store, MentionSource::caption);
  g.mentions.insert(g.mentions.end(), from_caption.begin(), from_caption.end());
  return g;
}

inline std::vector<GroundedRecord> ground_manifest(const Manifest& m, const KnowledgeStore& store,
                                                   std::size_t workers = 1) {
  return parallel_map(m.records.size(), workers, [&](std::size_t i) { return ground_record(m.records[i], store); });
}

inline nlohmann::json to_json(const GroundedRecord& g, const KnowledgeStore& store) {
  nlohmann::json mentions = nlohmann::json::array();
  for (const auto& m : g.mentions) {
    mentions.push_back({{"source", to_string(m.source)},
                        {"begin", m.begin},
                        {"end", m.end},
                        {"concept", store.entity_label(m.concept_id)}});
  }
  return {{"record_id", g.record_id}, {"mentions", std::move(mentions)}};
}

inline GroundedRecord grounded_from_json(const nlohmann::json& j, const KnowledgeStore& store) {
  GroundedRecord g;
  g.record_id = j.at("record_id").get<std::string>();
  for (const auto& m : j.at("mentions")) {
    const std::string label = m.at("concept").get<std::string>();
    const auto id = store.find_entity(label);
    if (!id) throw DataError("grounded concept '" + label + "' is not in the knowledge store");
    const std::string src = m.at("source").get<std::string>();
    if (src != "meme_text" && src != "caption") throw DataError("unknown mention source " + src);
    g.mentions.push_back({src == "caption" ? MentionSource::caption : MentionSource::meme_text,
                          m.at("begin").get<std::size_t>(), m.at("end").get<std::size_t>(), *id});
  }
  return g;
}

inline void write_grounded(const std::string& path, std::span<const GroundedRecord> records,
                           const KnowledgeStore& store) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& g : records) out << to_json(g, store).dump() << '\n';
  if (!out) throw DataError("failed writing " + path);
}

inline std::map<std::string, GroundedRecord> load_grounded(const std::string& path, const KnowledgeStore& store) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grounded mentions " + path);
  std::map<std::string, GroundedRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + " line " + std::to_string(line_no);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(where + ": not JSON");
    try {
      GroundedRecord g = grounded_from_json(j, store);
      const std::string id = g.record_id;
      if (!out.emplace(id, std::move(g)).second) throw DataError(where + ": duplicate record " + id);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidates and relevance

struct Candidates {
  std::vector<ConceptId> seeds;
  SubGraph subgraph;
  std::vector<ConceptId> scored;  // non-seed members, ascending id
};

inline Candidates candidates_for(const GroundedRecord& g, const KnowledgeStore& store,
                                 const GraphStageOptions& opt) {
  Candidates c;
  c.seeds = mention_concepts(g.mentions);
  if (c.seeds.empty()) return c;
  c.subgraph = expand(c.seeds, opt.hops, store, opt.max_nodes_per_hop);
  for (const auto& n : c.subgraph.nodes) {
    if (n.hop > 0) c.scored.push_back(n.concept_id);
  }
  std::sort(c.scored.begin(), c.scored.end());
  return c;
}

struct RecordScores {
  std::string record_id;
  ScoredNodes scores;
};

inline const GroundedRecord& grounded_for(const std::map<std::string, GroundedRecord>& grounded,
                                          const std::string& id) {
  auto it = grounded.find(id);
  if (it == grounded.end()) throw DataError("record " + id + " has no grounding entry");
  return it->second;
}

// Cosine relevance of every candidate against the record's context vector.
inline std::vector<RecordScores> score_manifest(const Manifest& m,
                                                const std::map<std::string, GroundedRecord>& grounded,
                                                const KnowledgeStore& store, const NodeEmbeddingTable& table,
                                                const GraphStageOptions& opt) {
  return parallel_map(m.records.size(), opt.workers, [&](std::size_t i) {
    const MemeRecord& r = m.records[i];
    const Candidates c = candidates_for(grounded_for(grounded, r.id), store, opt);
    const auto context = r.context.resolve();
    return RecordScores{r.id, score_cosine(context, c.scored, store, table)};
  });
}

// Score lines in ascending concept id per record, records in manifest order.
inline void write_scores(const std::string& path, std::span<const RecordScores> scores,
                         const KnowledgeStore& store) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& rs : scores) {
    std::vector<ScoredNode> nodes = rs.scores.nodes;
    std::sort(nodes.begin(), nodes.end(),
              [](const ScoredNode& a, const ScoredNode& b) { return a.concept_id < b.concept_id; });
    for (const auto& n : nodes) write_score_line(out, rs.record_id, store.entity_label(n.concept_id), n.score);
  }
  if (!out) throw DataError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Working graphs

// Builds one graph per record. With `external` the candidate scores come from
// a score file (ranked per the scorer kind); otherwise cosine is computed here.
inline std::vector<WorkingGraph> build_graphs(const Manifest& m,
                                              const std::map<std::string, GroundedRecord>& grounded,
                                              const KnowledgeStore& store, const NodeEmbeddingTable& table,
                                              const ExternalScores* external, const GraphStageOptions& opt) {
  if (opt.k < 1 || opt.k > 5000) throw ConfigError("graph.k must lie in [1, 5000]");
  if (!external && opt.scorer != ScorerKind::cosine) {
    throw ConfigError("scorer " + enum_to_string(opt.scorer) + " needs an external score file");
  }
  const GraphBuildOptions build_opt{opt.fallback_empty};
  return parallel_map(m.records.size(), opt.workers, [&](std::size_t i) {
    const MemeRecord& r = m.records[i];
    const Candidates c = candidates_for(grounded_for(grounded, r.id), store, opt);
    const auto context = r.context.resolve();
    std::vector<ConceptId> kept;
    if (!c.seeds.empty()) {
      const ScoredNodes scored = external ? external->scores_for(r.id, c.scored, store, direction_of(opt.scorer))
                                          : score_cosine(context, c.scored, store, table);
      kept = top_k(scored, opt.k, c.seeds);
    }
    return build_working_graph(r.id, context, c.subgraph, kept, store, table, build_opt);
  });
}

inline void write_graphs(const std::string& path, std::span<const WorkingGraph> graphs,
                         const KnowledgeStore& store) {
  const RelationVocabulary vocab = RelationVocabulary::from_store(store);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << nlohmann::json{{"schema_version", kSchemaVersion}, {"relations", vocab.names}}.dump() << '\n';
  for (const auto& g : graphs) out << working_graph_to_json(g, vocab.names).dump() << '\n';
  if (!out) throw DataError("failed writing " + path);
}

using GraphMap = std::map<std::string, std::shared_ptr<const WorkingGraph>>;

struct GraphFile {
  std::vector<std::string> relations;
  GraphMap graphs;
};

inline GraphFile load_graphs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open working graphs " + path);
  GraphFile f;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + " line " + std::to_string(line_no);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": not a JSON object");
    if (!have_header) {
      if (j.value("schema_version", -1) != kSchemaVersion) throw DataError(where + ": bad schema_version header");
      f.relations = j.at("relations").get<std::vector<std::string>>();
      have_header = true;
      continue;
    }
    auto g = std::make_shared<WorkingGraph>(working_graph_from_json(j));
    if (g->num_relations != f.relations.size()) throw DataError(where + ": relation count differs from header");
    try {
      validate_working_graph(*g);
    } catch (const ContractError& e) {
      throw DataError(where + ": " + e.what());
    }
    const std::string id = g->record_id;
    if (!f.graphs.emplace(id, std::move(g)).second) throw DataError(where + ": duplicate graph " + id);
  }
  if (!have_header) throw DataError(path + ": empty graph file");
  return f;
}

// ---------------------------------------------------------------------------
// Examples

// Resolves embeddings for the records of one split (all records when `split`
// is empty). Captions are read only when `with_caption` is set.
inline std::vector<Example> make_examples(const Manifest& m, const std::string& split, const GraphMap* graphs,
                                          bool with_caption) {
  std::vector<Example> out;
  for (const MemeRecord& r : m.records) {
    if (!split.empty() && r.split != split) continue;
    Example ex;
    ex.id = r.id;
    ex.image = r.image.resolve();
    ex.text = r.text_embedding.resolve();
    if (with_caption) {
      if (r.caption_embedding.empty()) throw DataError("record " + r.id + " lacks a caption embedding");
      ex.caption = r.caption_embedding.resolve();
    }
    ex.label = r.label;
    if (graphs) {
      auto it = graphs->find(r.id);
      if (it == graphs->end()) throw DataError("record " + r.id + " has no working graph");
      ex.graph = it->second;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace kinfuse
