// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// The finite-difference suite: every differentiable op of the engine, each
// checked on freshly drawn random instances.

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/fusion.hpp"
#include "kinfuse/gnn.hpp"
#include "kinfuse/gradcheck.hpp"
#include "kinfuse/graphbuild.hpp"
#include "kinfuse/model.hpp"
#include "kinfuse/objective.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

inline constexpr double kGradTolerance = 1e-4;

inline Tensor random_normal(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Context node 0 linked to node 1 in both directions, a self-loop on every
// node, and `extra` random KG edges typed with relations >= 3.
inline WorkingGraph random_working_graph(Rng& rng, std::size_t nodes, std::size_t num_relations,
                                         std::size_t dim, std::size_t extra) {
  if (nodes < 2 || num_relations < 4) throw ContractError("random_working_graph needs >= 2 nodes, >= 4 relations");
  WorkingGraph g;
  g.record_id = "random";
  g.num_relations = num_relations;
  g.nodes.push_back({std::nullopt, "z", kContextHop});
  for (std::size_t i = 1; i < nodes; ++i) {
    g.nodes.push_back({static_cast<ConceptId>(i), "n" + std::to_string(i), i == 1 ? 0 : 1});
  }
  for (std::size_t e = 0; e < extra; ++e) {
    const auto src = static_cast<std::uint32_t>(1 + rng.index(nodes - 1));
    auto dst = static_cast<std::uint32_t>(1 + rng.index(nodes - 1));
    if (dst == src) dst = static_cast<std::uint32_t>(1 + (dst % (nodes - 1)));
    g.edges.push_back({src, dst, static_cast<RelationId>(3 + rng.index(num_relations - 3))});
  }
  g.edges.push_back({0, 1, 1});
  g.edges.push_back({1, 0, 2});
  for (std::uint32_t i = 0; i < nodes; ++i) g.edges.push_back({i, i, 0});
  g.features = random_normal(rng, nodes, dim);
  return g;
}

// Weights the output entries with a fixed random matrix and sums them.
inline Var weighted_sum(const Var& out, Rng& rng) {
  const Var w = out.tape()->constant(random_normal(rng, out.rows(), out.cols()));
  return ad::sum(ad::mul(out, w));
}

struct GradSuiteEntry {
  std::string name;
  std::function<GradCheckResult(Rng&)> instance;
};

namespace detail {

using InputGen = std::function<std::vector<Tensor>(Rng&)>;
using OutFn = std::function<Var(std::span<const Var>)>;

// Checks sum(out * R) for a random R drawn per instance.
inline GradSuiteEntry tensor_entry(std::string name, InputGen gen, OutFn out) {
  return {std::move(name), [gen, out](Rng& rng) {
            const std::vector<Tensor> inputs = gen(rng);
            const std::uint64_t weight_seed = rng.next();
            ScalarFn fn = [out, weight_seed](Tape&, std::span<const Var> v) {
              Rng wr(weight_seed);
              return weighted_sum(out(v), wr);
            };
            return check_gradients(fn, inputs);
          }};
}

inline InputGen shapes(std::vector<std::pair<std::size_t, std::size_t>> dims) {
  return [dims](Rng& rng) {
    std::vector<Tensor> t;
    for (auto [r, c] : dims) t.push_back(random_normal(rng, r, c));
    return t;
  };
}

// Builds a fresh parameter store per instance and checks d loss / d params.
// `setup` registers parameters and returns a loss that reads them by reference.
using ParameterSetup = std::function<ParameterLossFn(Rng&, ParameterStore&)>;

inline GradSuiteEntry parameter_entry(std::string name, ParameterSetup setup) {
  return {std::move(name), [setup](Rng& rng) {
            ParameterStore params;
            const ParameterLossFn loss = setup(rng, params);
            return check_parameter_gradients(params, loss);
          }};
}

inline GradSuiteEntry gnn_entry(std::string name, GnnArch arch, std::size_t bases) {
  return parameter_entry(std::move(name), [arch, bases](Rng& rng, ParameterStore& params) {
    GnnConfig c;
    c.arch = arch;
    c.layers = 2;
    c.input_dim = 3;
    c.hidden_dim = 4;
    c.output_dim = 3;
    c.num_relations = 5;
    c.num_bases = bases;
    auto encoder = std::make_shared<GnnEncoder>(c);
    encoder->init(params, rng);
    auto graph = std::make_shared<WorkingGraph>(random_working_graph(rng, 5, 5, 3, 6));
    const Tensor probe = random_normal(rng, 1, 3);
    return ParameterLossFn([encoder, graph, probe, &params](Tape& tape) {
      const Var pooled = encoder->encode_pooled(tape, params, *graph);
      return ad::sum(ad::mul(pooled, tape.constant(probe)));
    });
  });
}

inline GradSuiteEntry fusion_module_entry(FusionKind kind, BilinearMode mode = BilinearMode::factorized) {
  std::string name = "fusion_module_" + enum_to_string(kind);
  if (kind == FusionKind::bilinear) name += "_" + enum_to_string(mode);
  return parameter_entry(name, [kind, mode](Rng& rng, ParameterStore& params) {
    FusionConfig c;
    c.kind = kind;
    c.bilinear_mode = mode;
    c.graph_dim = 3;
    c.distilled_dim = 4;
    c.dim = 3;
    c.han_levels = 2;
    auto module = std::make_shared<FusionModule>(c);
    module->init(params, rng);
    if (params.contains("fusion.han.logits")) {
      for (double& v : params.get("fusion.han.logits").value.data()) v = rng.normal();
    }
    for (const char* bias : {"fusion.project_graph.bias", "fusion.project_distilled.bias"}) {
      for (double& v : params.get(bias).value.data()) v = 0.5 * rng.normal();
    }
    const Tensor g = random_normal(rng, 1, 3), m = random_normal(rng, 1, 4);
    const Tensor probe = random_normal(rng, 1, c.output_dim());
    return ParameterLossFn([module, g, m, probe, &params](Tape& tape) {
      const Var out = module->apply(tape, params, tape.constant(g), tape.constant(m));
      return ad::sum(ad::mul(out, tape.constant(probe)));
    });
  });
}

// Whole classifier: graph branch, fusion, head, BCE and KD losses.
inline GradSuiteEntry model_entry(GnnArch arch, FusionKind kind) {
  return parameter_entry("model_total_loss_" + enum_to_string(arch) + "_" + enum_to_string(kind),
                         [arch, kind](Rng& rng, ParameterStore& params) {
    ModelConfig c;
    c.caption_dim = 3;
    c.gnn.arch = arch;
    c.gnn.input_dim = 3;
    c.gnn.hidden_dim = 3;
    c.gnn.output_dim = 3;
    c.gnn.num_relations = 5;
    c.align = {3, 4, 3, 1};
    c.fusion.kind = kind;
    c.fusion.dim = 3;
    c.loss.lambda_bce = 0.7;
    c.loss.lambda_kd = 0.3;
    auto model = std::make_shared<Model>(c);
    model->init(rng.next());
    auto ex = std::make_shared<Example>();
    ex->id = "x";
    ex->image = random_vector(rng, 3);
    ex->text = random_vector(rng, 4);
    ex->caption = random_vector(rng, 3);
    ex->label = static_cast<int>(rng.index(2));
    ex->graph = std::make_shared<WorkingGraph>(random_working_graph(rng, 5, 5, 3, 6));
    params = model->params();
    return ParameterLossFn(
        [model, ex, &params](Tape& tape) { return model->forward(tape, params, *ex, true).loss; });
  });
}

}  // namespace detail

inline std::vector<GradSuiteEntry> gradient_suite() {
  using detail::shapes;
  using detail::tensor_entry;
  using V = std::span<const Var>;
  std::vector<GradSuiteEntry> s;

  // Primitives.
  s.push_back(tensor_entry("matmul", shapes({{3, 4}, {4, 2}}), [](V v) { return ad::matmul(v[0], v[1]); }));
  s.push_back(tensor_entry("add", shapes({{3, 4}, {3, 4}}), [](V v) { return ad::add(v[0], v[1]); }));
  s.push_back(tensor_entry("add_row_bias", shapes({{3, 4}, {1, 4}}), [](V v) { return ad::add(v[0], v[1]); }));
  s.push_back(tensor_entry("sub", shapes({{3, 4}, {3, 4}}), [](V v) { return ad::sub(v[0], v[1]); }));
  s.push_back(tensor_entry("mul", shapes({{3, 4}, {3, 4}}), [](V v) { return ad::mul(v[0], v[1]); }));
  s.push_back(tensor_entry("scale", shapes({{3, 4}}), [](V v) { return ad::scale(v[0], -1.3); }));
  s.push_back(tensor_entry("concat_cols", shapes({{3, 2}, {3, 3}}), [](V v) { return ad::concat_cols({v[0], v[1]}); }));
  s.push_back(tensor_entry("concat_rows", shapes({{2, 3}, {1, 3}}), [](V v) { return ad::concat_rows({v[0], v[1]}); }));
  s.push_back(tensor_entry("relu", shapes({{3, 4}}), [](V v) { return ad::relu(v[0]); }));
  s.push_back(tensor_entry("leaky_relu", shapes({{3, 4}}), [](V v) { return ad::leaky_relu(v[0]); }));
  s.push_back(tensor_entry("sigmoid", shapes({{3, 4}}), [](V v) { return ad::sigmoid(v[0]); }));
  s.push_back(tensor_entry("tanh", shapes({{3, 4}}), [](V v) { return ad::tanh(v[0]); }));
  s.push_back(tensor_entry("softmax", shapes({{3, 4}}), [](V v) { return ad::softmax(v[0]); }));
  s.push_back(tensor_entry("mean_rows", shapes({{3, 4}}), [](V v) { return ad::mean_rows(v[0]); }));
  s.push_back(tensor_entry("sum", shapes({{3, 4}}), [](V v) { return ad::sum(ad::mul(v[0], v[0])); }));
  s.push_back(tensor_entry("sq_l2_norm", shapes({{3, 4}}), [](V v) { return ad::sq_l2_norm(v[0]); }));
  s.push_back(tensor_entry("gather_rows", shapes({{4, 3}}), [](V v) { return ad::gather_rows(v[0], {3, 0, 3, 1}); }));
  s.push_back(tensor_entry("scatter_add_rows", shapes({{4, 3}}),
                           [](V v) { return ad::scatter_add_rows(v[0], {2, 0, 2, 1}, 3); }));
  s.push_back(tensor_entry("segment_softmax", shapes({{5, 1}}),
                           [](V v) { return ad::segment_softmax(v[0], {0, 1, 0, 1, 2}, 3); }));
  s.push_back(tensor_entry("scale_rows", shapes({{4, 3}, {4, 1}}), [](V v) { return ad::scale_rows(v[0], v[1]); }));
  s.push_back(tensor_entry("spmm", shapes({{3, 2}}), [](V v) {
    const SparseMatrix a{3, 3, {{0, 1, 0.5}, {1, 0, -1.0}, {2, 2, 2.0}, {2, 1, 0.25}}};
    return ad::spmm(a, v[0]);
  }));
  s.push_back(tensor_entry("reshape", shapes({{2, 6}}), [](V v) { return ad::reshape(v[0], 3, 4); }));

  // Message passing and pooling, differentiated w.r.t. features and weights.
  for (RelationNorm norm : {RelationNorm::mean, RelationNorm::none}) {
    s.push_back({"rgcn_layer_" + enum_to_string(norm), [norm](Rng& rng) {
                   const WorkingGraph g = random_working_graph(rng, 5, 5, 3, 6);
                   std::vector<Tensor> inputs = {g.features};
                   for (int r = 0; r < 5; ++r) inputs.push_back(random_normal(rng, 3, 4, 0.7));
                   const std::uint64_t ws = rng.next();
                   ScalarFn fn = [g, norm, ws](Tape&, V v) {
                     RelationWeightFn w = [&](RelationId r) { return v[1 + r]; };
                     Rng wr(ws);
                     return weighted_sum(rgcn_layer(v[0], g, w, 5, norm, Activation::relu), wr);
                   };
                   return check_gradients(fn, inputs);
                 }});
  }
  s.push_back({"gat_layer", [](Rng& rng) {
                 const WorkingGraph g = random_working_graph(rng, 5, 5, 3, 6);
                 std::vector<Tensor> inputs = {g.features, random_normal(rng, 3, 4, 0.7), random_normal(rng, 4, 1),
                                               random_normal(rng, 4, 1)};
                 const std::uint64_t ws = rng.next();
                 ScalarFn fn = [g, ws](Tape&, V v) {
                   Rng wr(ws);
                   return weighted_sum(gat_layer(v[0], g, {v[1], v[2], v[3]}, 5, Activation::tanh).out, wr);
                 };
                 return check_gradients(fn, inputs);
               }});
  s.push_back(tensor_entry("mean_pool", shapes({{5, 3}}), [](V v) { return mean_pool(v[0]); }));
  s.push_back(detail::gnn_entry("gnn_rgcn_pooled", GnnArch::rgcn, 0));
  s.push_back(detail::gnn_entry("gnn_rgcn_basis_pooled", GnnArch::rgcn, 2));
  s.push_back(detail::gnn_entry("gnn_gat_pooled", GnnArch::gat, 0));

  // Fusion.
  // Weights drawn at init-like scale keep the output O(1), so round-off in
  // the differences stays far below the tolerance.
  s.push_back(tensor_entry("align_fuse",
                           [](Rng& rng) {
                             return std::vector<Tensor>{random_normal(rng, 1, 3), random_normal(rng, 1, 4),
                                                        random_normal(rng, 3, 5, 0.5), random_normal(rng, 4, 5, 0.5),
                                                        random_normal(rng, 5, 5, 0.5), random_normal(rng, 1, 5, 0.5),
                                                        random_normal(rng, 5, 5, 0.5), random_normal(rng, 1, 5, 0.5)};
                           },
                           [](V v) {
                             return align_fuse(v[0], v[1], AlignWeights{v[2], v[3], {{v[4], v[5]}, {v[6], v[7]}}});
                           }));
  s.push_back(tensor_entry("fuse_gated", shapes({{1, 3}, {1, 3}, {6, 3}}),
                           [](V v) { return fuse_gated(v[0], v[1], v[2]); }));
  s.push_back(tensor_entry("fuse_bilinear", shapes({{1, 3}, {1, 3}, {3, 4}, {3, 4}}),
                           [](V v) { return fuse_bilinear(v[0], v[1], v[2], v[3]); }));
  s.push_back(tensor_entry("fuse_bilinear_dense", shapes({{1, 3}, {1, 3}, {3, 3}}),
                           [](V v) { return fuse_bilinear_dense(v[0], v[1], v[2]); }));
  s.push_back(tensor_entry("fuse_han", shapes({{1, 3}, {1, 3}, {6, 3}, {6, 3}, {1, 2}}), [](V v) {
    const std::vector<Var> levels = {v[2], v[3]};
    return fuse_han(v[0], v[1], levels, v[4]);
  }));
  s.push_back(tensor_entry("fuse_multiplicative", shapes({{1, 3}, {1, 3}, {3, 3}}),
                           [](V v) { return fuse_multiplicative(v[0], v[1], v[2]); }));
  s.push_back(detail::fusion_module_entry(FusionKind::gated));
  s.push_back(detail::fusion_module_entry(FusionKind::bilinear, BilinearMode::factorized));
  s.push_back(detail::fusion_module_entry(FusionKind::bilinear, BilinearMode::dense));
  s.push_back(detail::fusion_module_entry(FusionKind::han));
  s.push_back(detail::fusion_module_entry(FusionKind::multiplicative));

  // Losses.
  s.push_back({"kd_loss", [](Rng& rng) {
                 ScalarFn fn = [](Tape&, V v) { return kd_loss(v[0], v[1], v[2]); };
                 return check_gradients(fn, {random_normal(rng, 1, 4), random_normal(rng, 1, 3),
                                             random_normal(rng, 3, 4)});
               }});
  s.push_back({"bce_loss", [](Rng& rng) {
                 const int y = static_cast<int>(rng.index(2));
                 ScalarFn fn = [y](Tape&, V v) { return bce_loss(v[0], y); };
                 return check_gradients(fn, {random_normal(rng, 1, 1, 3.0)});
               }});
  s.push_back({"cross_entropy_loss", [](Rng& rng) {
                 const int y = static_cast<int>(rng.index(4));
                 ScalarFn fn = [y](Tape&, V v) { return cross_entropy_loss(v[0], y); };
                 return check_gradients(fn, {random_normal(rng, 1, 4, 2.0)});
               }});
  s.push_back({"total_loss", [](Rng& rng) {
                 const int y = static_cast<int>(rng.index(2));
                 const double l1 = rng.uniform(), l2 = rng.uniform();
                 // Shared student vector feeds both terms.
                 ScalarFn fn = [y, l1, l2](Tape&, V v) {
                   const Var logit = ad::matmul(v[0], v[3]);
                   return total_loss(bce_loss(logit, y), kd_loss(v[0], v[1], v[2]), l1, l2);
                 };
                 return check_gradients(fn, {random_normal(rng, 1, 4), random_normal(rng, 1, 3),
                                             random_normal(rng, 3, 4), random_normal(rng, 4, 1)});
               }});
  for (GnnArch arch : {GnnArch::rgcn, GnnArch::gat}) s.push_back(detail::model_entry(arch, FusionKind::gated));
  s.push_back(detail::model_entry(GnnArch::rgcn, FusionKind::han));
  return s;
}

struct GradSuiteReport {
  std::string name;
  int instances = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

// At most this share of coordinates may be skipped as kinks.
inline constexpr double kMaxSkippedShare = 0.05;

inline std::vector<GradSuiteReport> run_gradient_suite(int instances = 20, std::uint64_t seed = 2024,
                                                       double tolerance = kGradTolerance) {
  std::vector<GradSuiteReport> out;
  const auto suite = gradient_suite();
  for (std::size_t i = 0; i < suite.size(); ++i) {
    Rng rng(seed + 7919 * i);
    GradSuiteReport r{suite[i].name, instances, 0.0, 0, 0, true};
    for (int k = 0; k < instances; ++k) {
      const GradCheckResult g = suite[i].instance(rng);
      r.max_rel_error = std::max(r.max_rel_error, g.max_rel_error);
      r.checked += g.checked;
      r.skipped += g.skipped;
    }
    const double total = static_cast<double>(r.checked + r.skipped);
    r.passed = r.max_rel_error < tolerance && r.checked > 0 && static_cast<double>(r.skipped) <= kMaxSkippedShare * total;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace kinfuse
