// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Oracle and invariant checks shared by the unit tests and the acceptance
// binary. Each returns an Outcome instead of asserting so both can report it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kinfuse/kinfuse.hpp"

namespace kinfuse::checks {

struct Outcome {
  bool ok = true;
  double measure = 0.0;  // worst observed deviation, where meaningful
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
};

inline constexpr double kAucOracleTolerance = 1e-12;
inline constexpr double kBilinearOracleTolerance = 1e-10;
inline constexpr double kAdamWTolerance = 1e-12;
// Reordering the same floating-point sums can move results by a few ulps.
inline constexpr double kReorderTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Oracles

inline double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Random instances of varying size; half of them use coarse scores so ties are common.
inline Outcome auc_oracle(int instances = 100, std::uint64_t seed = 11) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.index(200);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.index(2));
      scores[i] = t % 2 == 0 ? rng.uniform() : std::round(rng.uniform() * 5.0) / 5.0;
    }
    labels[0] = 1;
    labels[1] = 0;
    const double diff = std::abs(auc(scores, labels) - brute_force_auc(scores, labels));
    out.measure = std::max(out.measure, diff);
  }
  if (out.measure > kAucOracleTolerance) {
    out.fail("rank AUC differs from pair counting by " + std::to_string(out.measure));
  }
  return out;
}

// Each factorized output F_j against E_g W_j E_m^T with the explicit W_j = u_j v_j^T.
inline Outcome bilinear_oracle(int instances = 20, std::uint64_t seed = 12) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const std::size_t d = 3, d_out = 1 + rng.index(4);
    Tape tape;
    const Tensor eg = random_normal(rng, 1, d), em = random_normal(rng, 1, d);
    const Tensor u = random_normal(rng, d, d_out), v = random_normal(rng, d, d_out);
    const Tensor f = fuse_bilinear(tape.constant(eg), tape.constant(em), tape.constant(u), tape.constant(v)).value();
    for (std::size_t j = 0; j < d_out; ++j) {
      Tensor w(d, d);
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) w(a, b) = u(a, j) * v(b, j);
      }
      const double dense = fuse_bilinear_dense(tape.constant(eg), tape.constant(em), tape.constant(w)).value().item();
      out.measure = std::max(out.measure, std::abs(f[j] - dense));
    }
  }
  if (out.measure > kBilinearOracleTolerance) {
    out.fail("factorized bilinear differs from dense forms by " + std::to_string(out.measure));
  }
  return out;
}

// w=1, g=1, lr=0.1, wd=0: both bias-corrected moments are 1, so
// w1 = 1 - 0.1 / (1 + eps). With wd=0.1 and g=0: w1 = w0 - 0.1 * 0.1 * w0.
inline Outcome adamw_first_step() {
  Outcome out;
  {
    ParameterStore p;
    p.add("w", Tensor::scalar(1.0)).grad = Tensor::scalar(1.0);
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.0});
    opt.step(p, 0.1);
    const double expected = 1.0 - 0.1 / (1.0 + 1e-8);
    out.measure = std::abs(p.get("w").value.item() - expected);
  }
  {
    ParameterStore p;
    p.add("w", Tensor::scalar(2.0)).grad = Tensor::scalar(0.0);
    AdamW opt(AdamWConfig{0.9, 0.999, 1e-8, 0.1});
    opt.step(p, 0.1);
    out.measure = std::max(out.measure, std::abs(p.get("w").value.item() - 0.99 * 2.0));
  }
  if (out.measure > kAdamWTolerance) out.fail("AdamW first step off by " + std::to_string(out.measure));
  return out;
}

// ---------------------------------------------------------------------------
// GNN and pooling

// Graph with node i moved to position perm[i].
inline WorkingGraph permute_graph(const WorkingGraph& g, const std::vector<std::uint32_t>& perm) {
  WorkingGraph p = g;
  p.features = Tensor(g.features.rows(), g.features.cols());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    p.nodes[perm[i]] = g.nodes[i];
    for (std::size_t c = 0; c < g.features.cols(); ++c) p.features(perm[i], c) = g.features(i, c);
  }
  for (GraphEdge& e : p.edges) {
    e.src = perm[e.src];
    e.dst = perm[e.dst];
  }
  return p;
}

inline std::vector<std::uint32_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm);
  return perm;
}

inline GnnConfig small_gnn(GnnArch arch, std::size_t num_relations, std::size_t bases = 0) {
  GnnConfig c;
  c.arch = arch;
  c.layers = 2;
  c.input_dim = 4;
  c.hidden_dim = 5;
  c.output_dim = 3;
  c.num_relations = num_relations;
  c.num_bases = bases;
  return c;
}

inline Outcome gnn_permutation_equivariance(int instances = 20, std::uint64_t seed = 13) {
  Outcome out;
  Rng rng(seed);
  const GnnConfig configs[] = {small_gnn(GnnArch::rgcn, 6), small_gnn(GnnArch::rgcn, 6, 2),
                               small_gnn(GnnArch::gat, 6)};
  for (int t = 0; t < instances; ++t) {
    for (const GnnConfig& cfg : configs) {
      const WorkingGraph g = random_working_graph(rng, 3 + rng.index(8), 6, 4, 2 + rng.index(12));
      const auto perm = random_permutation(rng, g.node_count());
      const WorkingGraph pg = permute_graph(g, perm);
      GnnEncoder enc(cfg);
      ParameterStore params;
      enc.init(params, rng);
      Tape tape;
      const Tensor h = enc.encode(tape, params, g).value();
      const Tensor ph = enc.encode(tape, params, pg).value();
      for (std::size_t i = 0; i < g.node_count(); ++i) {
        for (std::size_t c = 0; c < h.cols(); ++c) {
          out.measure = std::max(out.measure, std::abs(h(i, c) - ph(perm[i], c)));
        }
      }
    }
  }
  if (out.measure > kReorderTolerance) {
    out.fail("permuted node outputs differ by " + std::to_string(out.measure));
  }
  return out;
}

inline Outcome pooling_permutation_invariance(int instances = 20, std::uint64_t seed = 14) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 1 + rng.index(30);
    const Tensor h = random_normal(rng, n, 5);
    const auto perm = random_permutation(rng, n);
    Tensor ph(n, 5);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 5; ++c) ph(perm[i], c) = h(i, c);
    }
    Tape tape;
    const Tensor a = mean_pool(tape.constant(h)).value();
    const Tensor b = mean_pool(tape.constant(ph)).value();
    out.measure = std::max(out.measure, max_abs_diff(a, b));
  }
  if (out.measure > kReorderTolerance) out.fail("pooled vectors differ by " + std::to_string(out.measure));
  return out;
}

// Sum of attention over each receiving node's in-edges.
inline Outcome attention_rows_sum_to_one(int instances = 20, std::uint64_t seed = 15) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const WorkingGraph g = random_working_graph(rng, 2 + rng.index(10), 5, 4, rng.index(20));
    Tape tape;
    GatWeights w{tape.constant(random_normal(rng, 4, 3)), tape.constant(random_normal(rng, 3, 1, 2.0)),
                 tape.constant(random_normal(rng, 3, 1, 2.0))};
    const GatResult r = gat_layer(tape.constant(g.features), g, w, 5, Activation::relu);
    std::vector<double> sums(g.node_count(), 0.0);
    std::vector<bool> has_in(g.node_count(), false);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      sums[g.edges[e].dst] += r.attention.value()[e];
      has_in[g.edges[e].dst] = true;
    }
    for (std::size_t v = 0; v < sums.size(); ++v) {
      if (has_in[v]) out.measure = std::max(out.measure, std::abs(sums[v] - 1.0));
    }
  }
  if (out.measure > kReorderTolerance) out.fail("attention sums deviate from 1 by " + std::to_string(out.measure));
  return out;
}

// ---------------------------------------------------------------------------
// Fusion

// Every output entry lies within [min, max] of the two inputs at that entry.
inline Outcome gated_fusion_convexity(int instances = 50, std::uint64_t seed = 16) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const std::size_t d = 1 + rng.index(8);
    Tape tape;
    const Tensor x = random_normal(rng, 1, d, 3.0), y = random_normal(rng, 1, d, 3.0);
    const Tensor f =
        fuse_gated(tape.constant(x), tape.constant(y), tape.constant(random_normal(rng, 2 * d, d, 3.0))).value();
    for (std::size_t i = 0; i < d; ++i) {
      const double lo = std::min(x[i], y[i]), hi = std::max(x[i], y[i]);
      out.measure = std::max({out.measure, lo - f[i], f[i] - hi});
    }
  }
  if (out.measure > kReorderTolerance) out.fail("gated output leaves the input range by " + std::to_string(out.measure));
  return out;
}

// ---------------------------------------------------------------------------
// Relevance pruning

inline bool ranks_before(const ScoredNode& a, const ScoredNode& b, ScoreDirection dir) {
  if (a.score != b.score) return dir == ScoreDirection::higher_is_better ? a.score > b.score : a.score < b.score;
  return a.concept_id < b.concept_id;
}

// Monotone in k, seeds always kept, exactly min(k, n) scored nodes kept, and
// every kept scored node ranks before every dropped one.
inline Outcome top_k_properties(int instances = 50, std::uint64_t seed = 17) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = rng.index(25);
    ScoredNodes scored;
    scored.direction = t % 2 == 0 ? ScoreDirection::higher_is_better : ScoreDirection::lower_is_better;
    std::vector<ConceptId> ids(60);
    std::iota(ids.begin(), ids.end(), 0u);
    rng.shuffle(ids);
    for (std::size_t i = 0; i < n; ++i) scored.nodes.push_back({ids[i], std::round(rng.uniform() * 6.0), 0});
    std::vector<ConceptId> seeds(ids.begin() + 50, ids.begin() + 50 + static_cast<long>(rng.index(4)));
    std::vector<ConceptId> previous;
    for (std::size_t k = 1; k <= n + 2; ++k) {
      const auto kept = top_k(scored, k, seeds);
      const std::set<ConceptId> kept_set(kept.begin(), kept.end());
      if (!std::is_sorted(kept.begin(), kept.end())) out.fail("top_k result not ascending");
      for (ConceptId s : seeds) {
        if (!kept_set.count(s)) out.fail("seed dropped at k=" + std::to_string(k));
      }
      for (ConceptId p : previous) {
        if (!kept_set.count(p)) out.fail("top_k not monotone at k=" + std::to_string(k));
      }
      std::size_t kept_scored = 0;
      for (const ScoredNode& a : scored.nodes) {
        if (!kept_set.count(a.concept_id)) continue;
        ++kept_scored;
        for (const ScoredNode& b : scored.nodes) {
          if (!kept_set.count(b.concept_id) && !ranks_before(a, b, scored.direction)) {
            out.fail("kept node does not dominate a dropped node");
          }
        }
      }
      if (kept_scored != std::min(k, n)) out.fail("wrong number of kept nodes at k=" + std::to_string(k));
      previous = kept;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Working graphs

struct RandomKg {
  KnowledgeStore store;
  NodeEmbeddingTable table{4};
};

inline RandomKg random_kg(Rng& rng, std::size_t entities, std::size_t edges) {
  RandomKg kg;
  for (std::size_t i = 0; i < entities; ++i) {
    const std::string label = "c" + std::to_string(i);
    kg.store.intern_entity(label);
    kg.table.add(label, random_vector(rng, 4));
  }
  const RelationId rels[] = {kg.store.intern_relation("RelatedTo"), kg.store.intern_relation("IsA")};
  for (std::size_t e = 0; e < edges; ++e) {
    const auto h = static_cast<ConceptId>(rng.index(entities));
    const auto t = static_cast<ConceptId>(rng.index(entities));
    kg.store.add_edge(h, rels[rng.index(2)], t, 1.0);
  }
  return kg;
}

// Structure, size bound, z's edge set, determinism and byte-identical JSON
// round-trip of graphs built from random stores.
inline Outcome working_graph_invariants(int instances = 30, std::uint64_t seed = 18) {
  Outcome out;
  Rng rng(seed);
  for (int t = 0; t < instances; ++t) {
    const RandomKg kg = random_kg(rng, 10 + rng.index(40), 5 + rng.index(80));
    const RelationVocabulary vocab = RelationVocabulary::from_store(kg.store);
    std::vector<ConceptId> seeds;
    for (std::size_t i = 0, n = 1 + rng.index(3); i < n; ++i) {
      seeds.push_back(static_cast<ConceptId>(rng.index(kg.store.entity_count())));
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
    const SubGraph one = expand(seeds, 1, kg.store);
    const SubGraph two = expand(seeds, 2, kg.store);
    for (const auto& n : one.nodes) {
      if (!two.contains(n.concept_id)) out.fail("hop-1 node missing from the hop-2 expansion");
    }
    std::vector<ConceptId> candidates;
    for (const auto& n : two.nodes) {
      if (n.hop > 0) candidates.push_back(n.concept_id);
    }
    const auto context = random_vector(rng, 4);
    const ScoredNodes scored = score_cosine(context, candidates, kg.store, kg.table);
    for (std::size_t k : {1, 3, 10}) {
      const auto kept = top_k(scored, k, seeds);
      const WorkingGraph g = build_working_graph("r", context, two, kept, kg.store, kg.table);
      try {
        validate_working_graph(g, vocab.self, vocab.context);
      } catch (const ContractError& e) {
        out.fail(e.what());
      }
      if (g.node_count() > k + seeds.size() + 1) out.fail("graph exceeds k + |seeds| + 1 nodes");
      for (const GraphEdge& e : g.edges) {
        if (e.src != 0 && e.dst != 0) continue;
        const bool allowed = (e.relation == vocab.self && e.src == e.dst) ||
                             (e.relation == vocab.context && e.src == 0 && g.nodes[e.dst].hop == 0) ||
                             (e.relation == vocab.context_inverse && e.dst == 0 && g.nodes[e.src].hop == 0);
        if (!allowed) out.fail("context node has an edge that is not a context link or its self-loop");
      }
      if (!(build_working_graph("r", context, two, kept, kg.store, kg.table) == g)) {
        out.fail("rebuilding the same graph gave a different result");
      }
      const std::string text = working_graph_to_json(g, vocab.names).dump();
      const WorkingGraph back = working_graph_from_json(nlohmann::json::parse(text));
      if (working_graph_to_json(back, vocab.names).dump() != text) out.fail("JSON round-trip is not byte-identical");
      if (!(back == g)) out.fail("JSON round-trip changed the graph");
    }
  }
  return out;
}

}  // namespace kinfuse::checks
