// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Relevance of candidate concepts to a meme's context, and top-k pruning.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/kgstore.hpp"

namespace kinfuse {

// Cosine similarity ranks higher-first; masked-LM perplexity lower-first.
enum class ScoreDirection { higher_is_better, lower_is_better };

struct ScoredNode {
  ConceptId concept_id = 0;
  double score = 0.0;
  std::size_t rank = 0;
};

struct ScoredNodes {
  ScoreDirection direction = ScoreDirection::higher_is_better;
  std::vector<ScoredNode> nodes;  // ordered by rank
};

// Assigns ranks best-first; ties go to the smaller concept id.
inline void rank_nodes(ScoredNodes& scored) {
  const bool higher = scored.direction == ScoreDirection::higher_is_better;
  std::sort(scored.nodes.begin(), scored.nodes.end(), [higher](const ScoredNode& a, const ScoredNode& b) {
    if (a.score != b.score) return higher ? a.score > b.score : a.score < b.score;
    return a.concept_id < b.concept_id;
  });
  for (std::size_t i = 0; i < scored.nodes.size(); ++i) scored.nodes[i].rank = i;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine between dims " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline ScoredNodes score_cosine(std::span<const double> context, std::span<const ConceptId> nodes,
                                const KnowledgeStore& store, const NodeEmbeddingTable& embeddings) {
  ScoredNodes out;
  out.direction = ScoreDirection::higher_is_better;
  out.nodes.reserve(nodes.size());
  for (ConceptId id : nodes) {
    const auto v = embeddings.at(store.entity_label(id));
    out.nodes.push_back({id, cosine_similarity(context, v), 0});
  }
  rank_nodes(out);
  return out;
}

// Externally computed scores: JSON-lines {record_id, concept, score}.
class ExternalScores {
 public:
  static ExternalScores read(std::istream& in, const std::string& name = "scores") {
    ExternalScores s;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::string where = name + " line " + std::to_string(line_no);
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("record_id") || !j.contains("concept") ||
          !j.contains("score") || !j["score"].is_number()) {
        throw DataError(where + ": expected {record_id, concept, score}");
      }
      const double score = j["score"].get<double>();
      if (!std::isfinite(score)) throw DataError(where + ": non-finite score");
      auto& rec = s.scores_[j["record_id"].get<std::string>()];
      if (!rec.emplace(j["concept"].get<std::string>(), score).second) {
        throw DataError(where + ": duplicate score for the same (record, concept)");
      }
    }
    return s;
  }

  static ExternalScores load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file " + path);
    return read(in, path);
  }

  // Scores of `nodes` for one record, ranked lower-first.
  ScoredNodes scores_for(const std::string& record_id, std::span<const ConceptId> nodes,
                         const KnowledgeStore& store,
                         ScoreDirection direction = ScoreDirection::lower_is_better) const {
    ScoredNodes out;
    out.direction = direction;
    if (nodes.empty()) return out;
    auto rec = scores_.find(record_id);
    std::vector<std::string> missing;
    for (ConceptId id : nodes) {
      const std::string& label = store.entity_label(id);
      if (rec == scores_.end()) {
        missing.push_back(label);
        continue;
      }
      auto it = rec->second.find(label);
      if (it == rec->second.end()) {
        missing.push_back(label);
      } else {
        out.nodes.push_back({id, it->second, 0});
      }
    }
    if (!missing.empty()) {
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      throw DataError("coverage error: record " + record_id + " has no score for: " + list);
    }
    rank_nodes(out);
    return out;
  }

  std::size_t record_count() const noexcept { return scores_.size(); }

 private:
  std::map<std::string, std::map<std::string, double>> scores_;
};

inline void write_score_line(std::ostream& os, const std::string& record_id, const std::string& concept_label,
                             double score) {
  os << nlohmann::json{{"record_id", record_id}, {"concept", concept_label}, {"score", score}}.dump() << '\n';
}

// The k best-ranked nodes plus every seed, ascending by concept id.
inline std::vector<ConceptId> top_k(const ScoredNodes& scored, std::size_t k,
                                    std::span<const ConceptId> seeds = {}) {
  if (k < 1) throw ConfigError("top_k requires k >= 1");
  ScoredNodes ranked = scored;
  rank_nodes(ranked);
  std::vector<ConceptId> kept;
  for (const ScoredNode& n : ranked.nodes) {
    if (kept.size() >= k) break;
    kept.push_back(n.concept_id);
  }
  kept.insert(kept.end(), seeds.begin(), seeds.end());
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  return kept;
}

}  // namespace kinfuse
