// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Graph encoders over working graphs: relational GCN and single-head GAT,
// followed by mean pooling.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/graphbuild.hpp"
#include "kinfuse/parameters.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

enum class GnnArch { rgcn, gat };
enum class Activation { relu, leaky_relu, tanh, sigmoid, identity };
enum class RelationNorm { none, mean };

inline Var activate(const Var& x, Activation act) {
  switch (act) {
    case Activation::relu: return ad::relu(x);
    case Activation::leaky_relu: return ad::leaky_relu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::sigmoid: return ad::sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

struct GnnConfig {
  GnnArch arch = GnnArch::rgcn;
  int layers = 2;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t output_dim = 64;
  Activation activation = Activation::relu;
  RelationNorm relation_norm = RelationNorm::mean;
  std::size_t num_bases = 0;  // 0 = one full matrix per relation
  std::size_t num_relations = 0;

  void validate() const {
    if (layers < 1) throw ConfigError("gnn.layers must be >= 1");
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw ConfigError("gnn dims must be >= 1");
    if (arch == GnnArch::rgcn && num_relations < 1) throw ConfigError("gnn needs a relation count");
  }

  std::size_t layer_in(int l) const { return l == 0 ? input_dim : hidden_dim; }
  std::size_t layer_out(int l) const { return l == layers - 1 ? output_dim : hidden_dim; }
};

// Supplies the transformation matrix of a relation (d_in x d_out).
using RelationWeightFn = std::function<Var(RelationId)>;

struct GatWeights {
  Var weight;    // d_in x d_out
  Var attn_dst;  // d_out x 1, the half of `a` applied to the receiving node
  Var attn_src;  // d_out x 1, the half applied to the neighbour
};

struct GatResult {
  Var out;
  Var attention;  // E x 1, aligned with graph.edges
};

namespace detail {

inline void check_relations(const WorkingGraph& g, std::size_t num_relations) {
  for (const GraphEdge& e : g.edges) {
    if (e.relation >= num_relations) {
      throw ContractError("edge relation id " + std::to_string(e.relation) + " outside the " +
                          std::to_string(num_relations) + " relations with parameters");
    }
  }
}

}  // namespace detail

// h_v' = act( sum_r sum_{u in N_r(v)} norm * h_u W_r ), N_r(v) = sources of
// r-typed edges into v. With mean normalisation, norm = 1 / |N_r(v)|.
inline Var rgcn_layer(const Var& h, const WorkingGraph& g, const RelationWeightFn& weight_of,
                      std::size_t num_relations, RelationNorm norm, Activation act) {
  if (h.rows() != g.node_count()) {
    throw DimensionError("rgcn_layer: " + std::to_string(h.rows()) + " feature rows for " +
                         std::to_string(g.node_count()) + " nodes");
  }
  detail::check_relations(g, num_relations);
  std::map<RelationId, SparseMatrix> adjacency;
  std::map<std::pair<RelationId, std::uint32_t>, double> in_degree;
  for (const GraphEdge& e : g.edges) in_degree[{e.relation, e.dst}] += 1.0;
  for (const GraphEdge& e : g.edges) {
    SparseMatrix& a = adjacency[e.relation];
    a.rows = a.cols = g.node_count();
    const double w = norm == RelationNorm::mean ? 1.0 / in_degree[{e.relation, e.dst}] : 1.0;
    a.entries.push_back({e.dst, e.src, w});
  }
  Var total;
  for (const auto& [relation, a] : adjacency) {
    Var message = ad::spmm(a, ad::matmul(h, weight_of(relation)));
    total = total.valid() ? ad::add(total, message) : message;
  }
  if (!total.valid()) {
    const Var w0 = weight_of(0);
    total = h.tape()->constant(Tensor(g.node_count(), w0.cols()));
  }
  return activate(total, act);
}

// Single-head attention over each node's in-edges (all relations pooled):
// alpha_vu = softmax_u(LeakyReLU(a_dst . Wh_v + a_src . Wh_u)),
// h_v' = act( sum_u alpha_vu W h_u ).
inline GatResult gat_layer(const Var& h, const WorkingGraph& g, const GatWeights& w,
                           std::size_t num_relations, Activation act) {
  if (h.rows() != g.node_count()) {
    throw DimensionError("gat_layer: feature rows do not match nodes");
  }
  detail::check_relations(g, num_relations);
  std::vector<std::size_t> src, dst;
  for (const GraphEdge& e : g.edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
  }
  const Var z = ad::matmul(h, w.weight);
  const std::size_t n = g.node_count();
  if (g.edges.empty()) {
    return {activate(h.tape()->constant(Tensor(n, z.cols())), act), h.tape()->constant(Tensor(0, 1))};
  }
  const Var score_dst = ad::matmul(z, w.attn_dst);
  const Var score_src = ad::matmul(z, w.attn_src);
  const Var logits = ad::leaky_relu(ad::add(ad::gather_rows(score_dst, dst), ad::gather_rows(score_src, src)));
  const Var alpha = ad::segment_softmax(logits, dst, n);
  const Var messages = ad::scale_rows(ad::gather_rows(z, src), alpha);
  return {activate(ad::scatter_add_rows(messages, dst, n), act), alpha};
}

// Mean of node representations.
inline Var mean_pool(const Var& h) {
  if (h.rows() == 0) throw ContractError("mean_pool of an empty graph");
  return ad::mean_rows(h);
}

// Owns parameter naming and layer stacking for a GnnConfig.
class GnnEncoder {
 public:
  explicit GnnEncoder(GnnConfig config) : config_(std::move(config)) { config_.validate(); }

  const GnnConfig& config() const noexcept { return config_; }

  void init(ParameterStore& params, Rng& rng) const {
    for (int l = 0; l < config_.layers; ++l) {
      const std::size_t din = config_.layer_in(l), dout = config_.layer_out(l);
      const std::string p = prefix(l);
      if (config_.arch == GnnArch::gat) {
        params.add(p + "weight", glorot_uniform(din, dout, rng));
        params.add(p + "attn_dst", glorot_uniform(dout, 1, rng));
        params.add(p + "attn_src", glorot_uniform(dout, 1, rng));
      } else if (config_.num_bases == 0) {
        for (std::size_t r = 0; r < config_.num_relations; ++r) {
          params.add(p + "rel" + std::to_string(r), glorot_uniform(din, dout, rng));
        }
      } else {
        Tensor bases(config_.num_bases, din * dout);
        for (std::size_t b = 0; b < config_.num_bases; ++b) {
          Tensor basis = glorot_uniform(din, dout, rng);
          for (std::size_t i = 0; i < basis.size(); ++i) bases(b, i) = basis[i];
        }
        params.add(p + "bases", std::move(bases));
        params.add(p + "coef", glorot_uniform(config_.num_relations, config_.num_bases, rng));
      }
    }
  }

  // Final node representations (|V| x output_dim).
  Var encode(Tape& tape, ParameterStore& params, const WorkingGraph& g) const {
    if (g.features.cols() != config_.input_dim) {
      throw DimensionError("graph features have dim " + std::to_string(g.features.cols()) +
                           ", encoder expects " + std::to_string(config_.input_dim));
    }
    Var h = tape.constant(g.features);
    for (int l = 0; l < config_.layers; ++l) {
      const std::string p = prefix(l);
      if (config_.arch == GnnArch::gat) {
        GatWeights w{tape.parameter(params.get(p + "weight")), tape.parameter(params.get(p + "attn_dst")),
                     tape.parameter(params.get(p + "attn_src"))};
        h = gat_layer(h, g, w, config_.num_relations, config_.activation).out;
        continue;
      }
      std::map<RelationId, Var> cache;
      Var combined;
      const std::size_t din = config_.layer_in(l), dout = config_.layer_out(l);
      RelationWeightFn weight_of = [&](RelationId r) -> Var {
        auto it = cache.find(r);
        if (it != cache.end()) return it->second;
        Var w;
        if (config_.num_bases == 0) {
          w = tape.parameter(params.get(p + "rel" + std::to_string(r)));
        } else {
          if (!combined.valid()) {
            combined = ad::matmul(tape.parameter(params.get(p + "coef")),
                                  tape.parameter(params.get(p + "bases")));
          }
          w = ad::reshape(ad::gather_rows(combined, {r}), din, dout);
        }
        cache.emplace(r, w);
        return w;
      };
      h = rgcn_layer(h, g, weight_of, config_.num_relations, config_.relation_norm, config_.activation);
    }
    return h;
  }

  Var encode_pooled(Tape& tape, ParameterStore& params, const WorkingGraph& g) const {
    return mean_pool(encode(tape, params, g));
  }

 private:
  static std::string prefix(int l) { return "gnn.l" + std::to_string(l) + "."; }

  GnnConfig config_;
};

}  // namespace kinfuse
