// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Per-record working graph: the pruned sub-graph joined to a context node.
//
// Node 0 is the context node; KG concepts follow in ascending concept id.
// Edges point in the direction messages flow (src -> dst). Relation ids reuse
// the store's vocabulary, plus one extra id for seed -> context edges.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/kgstore.hpp"
#include "kinfuse/tensor.hpp"

namespace kinfuse {

inline constexpr std::string_view kContextInverseRelation = "context_link_inv";
inline constexpr int kContextHop = -1;

struct GraphNode {
  std::optional<ConceptId> concept_id;  // empty for the context node
  std::string label;
  int hop = kContextHop;

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  RelationId relation = 0;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

// Relation ids as seen by the GNN.
struct RelationVocabulary {
  std::vector<std::string> names;
  RelationId self = 0;
  RelationId context = 1;
  RelationId context_inverse = 2;

  std::size_t size() const noexcept { return names.size(); }

  static RelationVocabulary from_store(const KnowledgeStore& store) {
    RelationVocabulary v;
    for (RelationId r = 0; r < store.relation_count(); ++r) v.names.push_back(store.relation_label(r));
    v.self = store.self_relation();
    v.context = store.context_relation();
    v.context_inverse = static_cast<RelationId>(v.names.size());
    v.names.emplace_back(kContextInverseRelation);
    return v;
  }
};

struct WorkingGraph {
  std::string record_id;
  std::size_t num_relations = 0;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  Tensor features;  // |V| x d_in

  std::size_t node_count() const noexcept { return nodes.size(); }

  friend bool operator==(const WorkingGraph&, const WorkingGraph&) = default;
};

struct GraphBuildOptions {
  // An empty pruned sub-graph yields a context-only graph instead of an error.
  bool fallback_empty = true;
};

// Assembles the working graph from the pruned concept set `kept`. `subgraph`
// supplies hop tags and candidate edges; seeds are its hop-0 nodes.
inline WorkingGraph build_working_graph(const std::string& record_id, std::span<const double> context,
                                        const SubGraph& subgraph, std::span<const ConceptId> kept,
                                        const KnowledgeStore& store,
                                        const NodeEmbeddingTable& embeddings,
                                        const GraphBuildOptions& options = {}) {
  if (kept.empty() && !options.fallback_empty) {
    throw DataError("build error: record " + record_id + " has an empty pruned sub-graph");
  }
  if (context.size() != embeddings.dim()) {
    throw DimensionError("context embedding dim " + std::to_string(context.size()) +
                         " differs from node embedding dim " + std::to_string(embeddings.dim()));
  }
  const RelationVocabulary vocab = RelationVocabulary::from_store(store);

  std::vector<ConceptId> concepts(kept.begin(), kept.end());
  std::sort(concepts.begin(), concepts.end());
  concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());

  std::unordered_map<ConceptId, int> hop_of;
  for (const auto& n : subgraph.nodes) hop_of.emplace(n.concept_id, n.hop);

  WorkingGraph g;
  g.record_id = record_id;
  g.num_relations = vocab.size();
  g.nodes.push_back({std::nullopt, "", kContextHop});
  std::unordered_map<ConceptId, std::uint32_t> index_of;
  for (ConceptId c : concepts) {
    auto it = hop_of.find(c);
    if (it == hop_of.end()) {
      throw ContractError("kept concept " + store.entity_label(c) + " is not in the sub-graph");
    }
    index_of.emplace(c, static_cast<std::uint32_t>(g.nodes.size()));
    g.nodes.push_back({c, store.entity_label(c), it->second});
  }

  const std::size_t d = embeddings.dim();
  g.features = Tensor(g.nodes.size(), d);
  for (std::size_t j = 0; j < d; ++j) g.features(0, j) = context[j];
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    const auto v = embeddings.at(g.nodes[i].label);
    for (std::size_t j = 0; j < d; ++j) g.features(i, j) = v[j];
  }
  if (!g.features.all_finite()) throw NumericError("non-finite node feature in " + record_id);

  for (const KgEdge& e : subgraph.edges) {
    auto h = index_of.find(e.head);
    auto t = index_of.find(e.tail);
    if (h == index_of.end() || t == index_of.end()) continue;
    if (e.relation == vocab.self || e.relation == vocab.context) continue;
    if (e.head == e.tail) continue;
    g.edges.push_back({h->second, t->second, e.relation});
  }
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    if (g.nodes[i].hop == 0) g.edges.push_back({0, static_cast<std::uint32_t>(i), vocab.context});
  }
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    if (g.nodes[i].hop == 0) {
      g.edges.push_back({static_cast<std::uint32_t>(i), 0, vocab.context_inverse});
    }
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    g.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), vocab.self});
  }
  return g;
}

// Throws ContractError naming the first broken structural invariant.
inline void validate_working_graph(const WorkingGraph& g, RelationId self = 0, RelationId context = 1) {
  if (g.nodes.empty() || g.nodes[0].concept_id.has_value()) {
    throw ContractError("working graph must start with the context node");
  }
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    if (!g.nodes[i].concept_id) throw ContractError("more than one context node");
    if (i > 1 && *g.nodes[i - 1].concept_id >= *g.nodes[i].concept_id) {
      throw ContractError("concept nodes are not in ascending id order");
    }
  }
  if (g.features.rows() != g.nodes.size() || !g.features.all_finite()) {
    throw ContractError("feature matrix does not match nodes or is non-finite");
  }
  std::vector<int> self_loops(g.nodes.size(), 0);
  std::vector<bool> linked(g.nodes.size(), false);
  for (const GraphEdge& e : g.edges) {
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) throw ContractError("edge endpoint out of range");
    if (e.relation >= g.num_relations) throw ContractError("edge relation out of range");
    if (e.relation == self) {
      if (e.src != e.dst) throw ContractError("self relation on a non-loop edge");
      ++self_loops[e.src];
    }
    if (e.relation == context && e.src == 0) linked[e.dst] = true;
  }
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (self_loops[i] != 1) throw ContractError("node " + std::to_string(i) + " lacks exactly one self-loop");
    if (i > 0 && g.nodes[i].hop == 0 && !linked[i]) {
      throw ContractError("seed node " + g.nodes[i].label + " has no context link");
    }
  }
}

inline nlohmann::json working_graph_to_json(const WorkingGraph& g,
                                            std::span<const std::string> relation_names = {}) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const GraphNode& n = g.nodes[i];
    nodes.push_back({{"index", i},
                     {"concept", n.concept_id ? nlohmann::json(*n.concept_id) : nlohmann::json(nullptr)},
                     {"label", n.label},
                     {"hop", n.hop},
                     {"feature_ref", n.concept_id ? "node:" + n.label : "context:" + g.record_id}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const GraphEdge& e : g.edges) {
    nlohmann::json je = {{"src", e.src}, {"dst", e.dst}, {"relation_id", e.relation}};
    if (e.relation < relation_names.size()) je["relation"] = relation_names[e.relation];
    edges.push_back(std::move(je));
  }
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t r = 0; r < g.features.rows(); ++r) {
    const auto row = g.features.row_span(r);
    features.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {{"record_id", g.record_id},
          {"num_relations", g.num_relations},
          {"nodes", std::move(nodes)},
          {"edges", std::move(edges)},
          {"features", std::move(features)}};
}

inline WorkingGraph working_graph_from_json(const nlohmann::json& j) {
  try {
    WorkingGraph g;
    g.record_id = j.at("record_id").get<std::string>();
    g.num_relations = j.at("num_relations").get<std::size_t>();
    for (const auto& n : j.at("nodes")) {
      GraphNode node;
      if (!n.at("concept").is_null()) node.concept_id = n["concept"].get<ConceptId>();
      node.label = n.at("label").get<std::string>();
      node.hop = n.at("hop").get<int>();
      g.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
      g.edges.push_back({e.at("src").get<std::uint32_t>(), e.at("dst").get<std::uint32_t>(),
                         e.at("relation_id").get<RelationId>()});
    }
    const auto& rows = j.at("features");
    const std::size_t d = rows.empty() ? 0 : rows[0].size();
    g.features = Tensor(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != d) throw DataError("ragged feature matrix in graph " + g.record_id);
      for (std::size_t c = 0; c < d; ++c) g.features(r, c) = rows[r][c].get<double>();
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed working graph JSON: ") + e.what());
  }
}

}  // namespace kinfuse
