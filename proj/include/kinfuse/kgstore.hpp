// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Commonsense knowledge store: ConceptNet ingestion, interning, binary
// snapshots, text grounding, and multi-hop neighbourhood expansion.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/binary_io.hpp"
#include "kinfuse/errors.hpp"

namespace kinfuse {

using ConceptId = std::uint32_t;
using RelationId = std::uint32_t;

inline constexpr std::string_view kSelfRelation = "self";
inline constexpr std::string_view kContextRelation = "context_link";

struct KgEdge {
  ConceptId head;
  RelationId relation;
  ConceptId tail;
  double weight;

  friend bool operator==(const KgEdge&, const KgEdge&) = default;
};

struct IngestOptions {
  // Empty string disables the filter.
  std::string language_filter = "en";
  double min_weight = -std::numeric_limits<double>::infinity();
  bool raw_conceptnet = false;
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t comments = 0;
  std::size_t kept = 0;
  std::size_t dropped_language = 0;
  std::size_t dropped_weight = 0;
  std::size_t duplicates = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t edges = 0;
};

inline void to_json(nlohmann::json& j, const IngestReport& r) {
  j = nlohmann::json{{"lines", r.lines},
                     {"comments", r.comments},
                     {"kept", r.kept},
                     {"dropped_language", r.dropped_language},
                     {"dropped_weight", r.dropped_weight},
                     {"duplicates", r.duplicates},
                     {"entities", r.entities},
                     {"relations", r.relations},
                     {"edges", r.edges}};
}

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace detail

// Language code of a ConceptNet URI ("/c/en/dog/n" -> "en"); empty for plain labels.
inline std::string concept_language(std::string_view uri) {
  if (uri.substr(0, 3) != "/c/") return {};
  const std::size_t end = uri.find('/', 3);
  return std::string(uri.substr(3, end == std::string_view::npos ? std::string_view::npos : end - 3));
}

// "/c/en/ice_cream/n/wn/food" -> "ice_cream"; "Ice Cream" -> "ice_cream".
inline std::string normalize_concept_label(std::string_view raw) {
  std::string_view s = raw;
  if (s.substr(0, 3) == "/c/") {
    const std::size_t lang_end = s.find('/', 3);
    s = lang_end == std::string_view::npos ? std::string_view{} : s.substr(lang_end + 1);
    const std::size_t sense = s.find('/');
    if (sense != std::string_view::npos) s = s.substr(0, sense);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out = detail::ascii_lower(s);
  std::replace(out.begin(), out.end(), ' ', '_');
  return out;
}

// "/r/RelatedTo" -> "RelatedTo".
inline std::string normalize_relation_label(std::string_view raw) {
  std::string_view s = raw;
  if (s.substr(0, 3) == "/r/") s.remove_prefix(3);
  return std::string(s);
}

class KnowledgeStore {
 public:
  KnowledgeStore() {
    intern_relation(std::string(kSelfRelation));
    intern_relation(std::string(kContextRelation));
  }

  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  const std::string& entity_label(ConceptId id) const { return entities_.at(id); }
  const std::string& relation_label(RelationId id) const { return relations_.at(id); }
  const std::vector<KgEdge>& edges() const noexcept { return edges_; }

  RelationId self_relation() const { return 0; }
  RelationId context_relation() const { return 1; }

  std::optional<ConceptId> find_entity(std::string_view label) const {
    auto it = entity_index_.find(std::string(label));
    if (it == entity_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<RelationId> find_relation(std::string_view label) const {
    auto it = relation_index_.find(std::string(label));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }

  ConceptId intern_entity(const std::string& label) {
    auto [it, inserted] = entity_index_.try_emplace(label, static_cast<ConceptId>(entities_.size()));
    if (inserted) {
      entities_.push_back(label);
      out_edges_.emplace_back();
      in_edges_.emplace_back();
    }
    return it->second;
  }

  RelationId intern_relation(const std::string& label) {
    auto [it, inserted] =
        relation_index_.try_emplace(label, static_cast<RelationId>(relations_.size()));
    if (inserted) relations_.push_back(label);
    return it->second;
  }

  // Returns false if the (head, relation, tail) triple already exists.
  bool add_edge(ConceptId head, RelationId relation, ConceptId tail, double weight) {
    if (head >= entities_.size() || tail >= entities_.size() || relation >= relations_.size()) {
      throw ContractError("add_edge with unknown ids");
    }
    if (!triples_.insert(triple_key(head, relation, tail)).second) return false;
    const auto index = static_cast<std::uint32_t>(edges_.size());
    edges_.push_back({head, relation, tail, weight});
    out_edges_[head].push_back(index);
    in_edges_[tail].push_back(index);
    return true;
  }

  bool add_edge(const std::string& head, const std::string& relation, const std::string& tail,
                double weight) {
    const ConceptId h = intern_entity(head);
    const RelationId r = intern_relation(relation);
    const ConceptId t = intern_entity(tail);
    return add_edge(h, r, t, weight);
  }

  // Edge indices with `id` as head / as tail.
  std::span<const std::uint32_t> outgoing(ConceptId id) const { return out_edges_.at(id); }
  std::span<const std::uint32_t> incoming(ConceptId id) const { return in_edges_.at(id); }

  // Distinct neighbours ignoring edge direction, ascending.
  std::vector<ConceptId> neighbours(ConceptId id) const {
    std::vector<ConceptId> out;
    for (std::uint32_t e : outgoing(id)) out.push_back(edges_[e].tail);
    for (std::uint32_t e : incoming(id)) out.push_back(edges_[e].head);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  // Binary snapshot: magic, version, then length-prefixed tables; little-endian.
  void save(std::ostream& os) const {
    os.write(kMagic.data(), kMagic.size());
    binio::write_u32(os, kVersion);
    binio::write_u32(os, static_cast<std::uint32_t>(entities_.size()));
    for (const std::string& e : entities_) binio::write_string(os, e);
    binio::write_u32(os, static_cast<std::uint32_t>(relations_.size()));
    for (const std::string& r : relations_) binio::write_string(os, r);
    binio::write_u64(os, edges_.size());
    for (const KgEdge& e : edges_) {
      binio::write_u32(os, e.head);
      binio::write_u32(os, e.relation);
      binio::write_u32(os, e.tail);
      binio::write_f64(os, e.weight);
    }
    if (!os) throw DataError("failed writing knowledge store snapshot");
  }

  static KnowledgeStore load(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw DataError("not a knowledge store snapshot (bad magic)");
    const std::uint32_t version = binio::read_u32(is);
    if (version != kVersion) {
      throw DataError("unsupported knowledge store snapshot version " + std::to_string(version));
    }
    KnowledgeStore store;
    store.entities_.clear();
    store.entity_index_.clear();
    store.relations_.clear();
    store.relation_index_.clear();
    store.out_edges_.clear();
    store.in_edges_.clear();
    const std::uint32_t n_entities = binio::read_u32(is);
    for (std::uint32_t i = 0; i < n_entities; ++i) {
      const std::string label = binio::read_string(is);
      if (store.intern_entity(label) != i) throw DataError("duplicate entity in snapshot: " + label);
    }
    const std::uint32_t n_relations = binio::read_u32(is);
    for (std::uint32_t i = 0; i < n_relations; ++i) {
      const std::string label = binio::read_string(is);
      if (store.intern_relation(label) != i) throw DataError("duplicate relation in snapshot: " + label);
    }
    if (store.find_relation(kSelfRelation) != RelationId{0} ||
        store.find_relation(kContextRelation) != RelationId{1}) {
      throw DataError("snapshot lacks reserved relations");
    }
    const std::uint64_t n_edges = binio::read_u64(is);
    for (std::uint64_t i = 0; i < n_edges; ++i) {
      const ConceptId h = binio::read_u32(is);
      const RelationId r = binio::read_u32(is);
      const ConceptId t = binio::read_u32(is);
      const double w = binio::read_f64(is);
      if (h >= n_entities || t >= n_entities || r >= n_relations) {
        throw DataError("snapshot edge " + std::to_string(i) + " references unknown ids");
      }
      if (!store.add_edge(h, r, t, w)) throw DataError("duplicate edge in snapshot");
    }
    return store;
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    save(os);
  }

  static KnowledgeStore load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open knowledge store " + path);
    return load(is);
  }

 private:
  static constexpr std::array<char, 8> kMagic = {'K', 'F', 'K', 'G', 'S', 'N', 'A', 'P'};
  static constexpr std::uint32_t kVersion = 1;

  struct Triple {
    ConceptId head;
    RelationId relation;
    ConceptId tail;
    friend bool operator==(const Triple&, const Triple&) = default;
  };
  struct TripleHash {
    std::size_t operator()(const Triple& t) const noexcept {
      std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) | t.tail;
      h ^= (static_cast<std::uint64_t>(t.relation) + 0x9E3779B97F4A7C15ull) * 0xBF58476D1CE4E5B9ull;
      h ^= h >> 31;
      return static_cast<std::size_t>(h);
    }
  };

  static Triple triple_key(ConceptId h, RelationId r, ConceptId t) { return {h, r, t}; }

  std::vector<std::string> entities_;
  std::unordered_map<std::string, ConceptId> entity_index_;
  std::vector<std::string> relations_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::vector<KgEdge> edges_;
  std::vector<std::vector<std::uint32_t>> out_edges_;
  std::vector<std::vector<std::uint32_t>> in_edges_;
  std::unordered_set<Triple, TripleHash> triples_;
};

// Parses a simplified (head, relation, tail, weight) TSV or, with
// raw_conceptnet, the 5-column assertion dump.
inline KnowledgeStore ingest(std::istream& in, const IngestOptions& options,
                             IngestReport* report = nullptr) {
  KnowledgeStore store;
  IngestReport rep;
  std::string line;
  while (std::getline(in, line)) {
    ++rep.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') {
      ++rep.comments;
      continue;
    }
    const auto fields = detail::split_tabs(line);
    std::string_view head, relation, tail;
    double weight = 1.0;
    const std::string where = "line " + std::to_string(rep.lines);
    if (options.raw_conceptnet) {
      if (fields.size() != 5) {
        throw DataError(where + ": expected 5 tab-separated fields, got " +
                        std::to_string(fields.size()));
      }
      relation = fields[1];
      head = fields[2];
      tail = fields[3];
      if (!options.language_filter.empty() && (concept_language(head) != options.language_filter ||
                                                concept_language(tail) != options.language_filter)) {
        ++rep.dropped_language;
        continue;
      }
      nlohmann::json info = nlohmann::json::parse(fields[4], nullptr, false);
      if (info.is_discarded() || !info.is_object()) throw DataError(where + ": malformed JSON column");
      if (info.contains("weight")) {
        if (!info["weight"].is_number()) throw DataError(where + ": weight is not a number");
        weight = info["weight"].get<double>();
      }
    } else {
      if (fields.size() != 4) {
        throw DataError(where + ": expected 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
      }
      head = fields[0];
      relation = fields[1];
      tail = fields[2];
      const std::string w(fields[3]);
      char* end = nullptr;
      weight = std::strtod(w.c_str(), &end);
      if (w.empty() || end != w.c_str() + w.size()) throw DataError(where + ": bad weight '" + w + "'");
      if (!options.language_filter.empty()) {
        const std::string lh = concept_language(head), lt = concept_language(tail);
        if ((!lh.empty() && lh != options.language_filter) ||
            (!lt.empty() && lt != options.language_filter)) {
          ++rep.dropped_language;
          continue;
        }
      }
    }
    if (weight < options.min_weight) {
      ++rep.dropped_weight;
      continue;
    }
    const std::string h = normalize_concept_label(head);
    const std::string t = normalize_concept_label(tail);
    const std::string r = normalize_relation_label(relation);
    if (h.empty() || t.empty() || r.empty()) throw DataError(where + ": empty concept or relation");
    if (store.add_edge(h, r, t, weight)) {
      ++rep.kept;
    } else {
      ++rep.duplicates;
    }
  }
  if (store.edge_count() == 0) throw DataError("ingestion produced an empty knowledge store");
  rep.entities = store.entity_count();
  rep.relations = store.relation_count();
  rep.edges = store.edge_count();
  if (report != nullptr) *report = rep;
  return store;
}

inline KnowledgeStore ingest_file(const std::string& path, const IngestOptions& options,
                                  IngestReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge file " + path);
  return ingest(in, options, report);
}

// ---------------------------------------------------------------------------
// Grounding

enum class MentionSource { meme_text, caption };

inline std::string_view to_string(MentionSource s) {
  return s == MentionSource::meme_text ? "meme_text" : "caption";
}

struct GroundedMention {
  MentionSource source = MentionSource::meme_text;
  std::size_t begin = 0;  // byte offsets into the source string
  std::size_t end = 0;
  ConceptId concept_id = 0;

  friend bool operator==(const GroundedMention&, const GroundedMention&) = default;
};

inline const std::unordered_set<std::string>& english_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",      "about", "above", "after", "again",  "against", "all",   "am",     "an",
      "and",    "any",   "are",   "as",    "at",     "be",      "been",  "before", "being",
      "below",  "between", "both", "but",  "by",     "can",     "could", "did",    "do",
      "does",   "doing", "down",  "during", "each",  "few",     "for",   "from",   "further",
      "had",    "has",   "have",  "having", "he",    "her",     "here",  "hers",   "herself",
      "him",    "himself", "his", "how",   "i",      "if",      "in",    "into",   "is",
      "it",     "its",   "itself", "just", "me",     "more",    "most",  "my",     "myself",
      "no",     "nor",   "not",   "now",   "of",     "off",     "on",    "once",   "only",
      "or",     "other", "our",   "ours",  "ourselves", "out",  "over",  "own",    "same",
      "she",    "should", "so",   "some",  "such",   "than",    "that",  "the",    "their",
      "theirs", "them",  "themselves", "then", "there", "these", "they", "this",  "those",
      "through", "to",   "too",   "under", "until",  "up",      "very",  "was",    "we",
      "were",   "what",  "when",  "where", "which",  "while",   "who",   "whom",   "why",
      "will",   "with",  "would", "you",   "your",   "yours",   "yourself", "yourselves",
  };
  return words;
}

namespace detail {

struct Token {
  std::string text;  // lowercased, punctuation removed
  std::size_t begin;
  std::size_t end;
};

inline bool token_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !token_char(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    Token tok{{}, i, i};
    while (i < text.size() && (token_char(static_cast<unsigned char>(text[i])) || text[i] == '\'')) {
      const unsigned char c = static_cast<unsigned char>(text[i]);
      if (c != '\'') {
        tok.text.push_back(static_cast<char>(std::tolower(c)));
        tok.end = i + 1;
      }
      ++i;
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

}  // namespace detail

inline constexpr std::size_t kMaxNgram = 3;

// Greedy left-to-right n-gram matching (n <= 3) against entity labels; the
// longest match starting at a token wins, and lone stopwords never match.
inline std::vector<GroundedMention> ground(std::string_view text, const KnowledgeStore& store,
                                           MentionSource source = MentionSource::meme_text) {
  const auto tokens = detail::tokenize(text);
  const auto& stop = english_stopwords();
  std::vector<GroundedMention> mentions;
  std::size_t i = 0;
  while (i < tokens.size()) {
    bool matched = false;
    for (std::size_t n = std::min(kMaxNgram, tokens.size() - i); n >= 1; --n) {
      std::string key = tokens[i].text;
      for (std::size_t j = 1; j < n; ++j) key += "_" + tokens[i + j].text;
      if (n == 1 && stop.count(key) != 0) break;
      if (auto id = store.find_entity(key)) {
        mentions.push_back({source, tokens[i].begin, tokens[i + n - 1].end, *id});
        i += n;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return mentions;
}

// Distinct concept ids of a mention list, ascending.
inline std::vector<ConceptId> mention_concepts(std::span<const GroundedMention> mentions) {
  std::vector<ConceptId> ids;
  for (const auto& m : mentions) ids.push_back(m.concept_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Expansion

struct SubGraphNode {
  ConceptId concept_id;
  int hop;  // 0 = grounded seed

  friend bool operator==(const SubGraphNode&, const SubGraphNode&) = default;
};

struct SubGraph {
  std::vector<SubGraphNode> nodes;  // hop-major, ascending id within a hop
  std::vector<KgEdge> edges;        // induced, sorted by (head, relation, tail)

  bool contains(ConceptId id) const {
    return std::any_of(nodes.begin(), nodes.end(), [id](const auto& n) { return n.concept_id == id; });
  }
};

inline constexpr std::size_t kDefaultMaxNodesPerHop = 2000;

// Breadth-first expansion treating KG edges as undirected. Each hop keeps at
// most `max_nodes_per_hop` new nodes, smallest entity ids first.
inline SubGraph expand(std::span<const ConceptId> seeds, int hops, const KnowledgeStore& store,
                       std::size_t max_nodes_per_hop = kDefaultMaxNodesPerHop) {
  if (seeds.empty()) throw ContractError("expand requires at least one seed");
  if (hops < 0 || hops > 2) throw ConfigError("hops must be 0, 1 or 2");
  std::vector<ConceptId> frontier(seeds.begin(), seeds.end());
  std::sort(frontier.begin(), frontier.end());
  frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  for (ConceptId s : frontier) {
    if (s >= store.entity_count()) throw ContractError("seed id " + std::to_string(s) + " not in store");
  }

  SubGraph g;
  std::unordered_set<ConceptId> members(frontier.begin(), frontier.end());
  for (ConceptId s : frontier) g.nodes.push_back({s, 0});

  for (int hop = 1; hop <= hops; ++hop) {
    std::set<ConceptId> next;
    for (ConceptId v : frontier) {
      for (ConceptId u : store.neighbours(v)) {
        if (members.count(u) == 0) next.insert(u);
      }
    }
    frontier.clear();
    for (ConceptId u : next) {
      if (frontier.size() >= max_nodes_per_hop) break;
      frontier.push_back(u);
      members.insert(u);
      g.nodes.push_back({u, hop});
    }
    if (frontier.empty()) break;
  }

  for (const SubGraphNode& n : g.nodes) {
    for (std::uint32_t e : store.outgoing(n.concept_id)) {
      const KgEdge& edge = store.edges()[e];
      if (members.count(edge.tail) != 0) g.edges.push_back(edge);
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const KgEdge& a, const KgEdge& b) {
    return std::tie(a.head, a.relation, a.tail) < std::tie(b.head, b.relation, b.tail);
  });
  return g;
}

}  // namespace kinfuse
