// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Full classifier: align-fused student vector, optional graph branch fused in,
// linear head, and the joint training objective.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/fusion.hpp"
#include "kinfuse/gnn.hpp"
#include "kinfuse/graphbuild.hpp"
#include "kinfuse/objective.hpp"
#include "kinfuse/parameters.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

// ---------------------------------------------------------------------------
// Enum spellings shared by configs and checkpoints.

template <typename E>
struct EnumNames;

template <>
struct EnumNames<GnnArch> {
  static constexpr std::pair<GnnArch, const char*> values[] = {{GnnArch::rgcn, "rgcn"}, {GnnArch::gat, "gat"}};
};
template <>
struct EnumNames<Activation> {
  static constexpr std::pair<Activation, const char*> values[] = {{Activation::relu, "relu"},
                                                                   {Activation::leaky_relu, "leaky_relu"},
                                                                   {Activation::tanh, "tanh"},
                                                                   {Activation::sigmoid, "sigmoid"},
                                                                   {Activation::identity, "identity"}};
};
template <>
struct EnumNames<RelationNorm> {
  static constexpr std::pair<RelationNorm, const char*> values[] = {{RelationNorm::none, "none"},
                                                                     {RelationNorm::mean, "mean"}};
};
template <>
struct EnumNames<FusionKind> {
  static constexpr std::pair<FusionKind, const char*> values[] = {{FusionKind::gated, "gated"},
                                                                   {FusionKind::bilinear, "bilinear"},
                                                                   {FusionKind::han, "han"},
                                                                   {FusionKind::multiplicative, "multiplicative"}};
};
template <>
struct EnumNames<BilinearMode> {
  static constexpr std::pair<BilinearMode, const char*> values[] = {{BilinearMode::factorized, "factorized"},
                                                                     {BilinearMode::dense, "dense"}};
};

template <typename E>
std::string enum_to_string(E value) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (v == value) return name;
  }
  throw ContractError("unnamed enum value");
}

template <typename E>
E enum_from_string(const std::string& text, const std::string& key) {
  std::string options;
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (text == name) return v;
    options += (options.empty() ? "" : "|") + std::string(name);
  }
  throw ConfigError(key + ": '" + text + "' is not one of " + options);
}

// ---------------------------------------------------------------------------

struct ModelConfig {
  bool use_graph = true;
  std::size_t caption_dim = 0;
  GnnConfig gnn;
  AlignConfig align;
  FusionConfig fusion;
  LossConfig loss;

  std::size_t output_units() const { return loss.num_classes == 2 ? 1 : static_cast<std::size_t>(loss.num_classes); }

  // Fills dims that follow from other fields.
  void finalize() {
    fusion.graph_dim = gnn.output_dim;
    fusion.distilled_dim = align.dim;
    loss.validate();
    align.validate();
    if (use_graph) {
      gnn.validate();
      fusion.validate();
    }
    if (loss.kd_enabled() && caption_dim == 0) {
      throw ConfigError("KD loss enabled but the caption embedding dim is unknown");
    }
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"use_graph", c.use_graph},
          {"caption_dim", c.caption_dim},
          {"gnn",
           {{"arch", enum_to_string(c.gnn.arch)},
            {"layers", c.gnn.layers},
            {"input_dim", c.gnn.input_dim},
            {"hidden_dim", c.gnn.hidden_dim},
            {"output_dim", c.gnn.output_dim},
            {"activation", enum_to_string(c.gnn.activation)},
            {"relation_norm", enum_to_string(c.gnn.relation_norm)},
            {"num_bases", c.gnn.num_bases},
            {"num_relations", c.gnn.num_relations}}},
          {"align",
           {{"image_dim", c.align.image_dim},
            {"text_dim", c.align.text_dim},
            {"dim", c.align.dim},
            {"mapping_layers", c.align.mapping_layers}}},
          {"fusion",
           {{"kind", enum_to_string(c.fusion.kind)},
            {"dim", c.fusion.dim},
            {"han_levels", c.fusion.han_levels},
            {"bilinear_mode", enum_to_string(c.fusion.bilinear_mode)}}},
          {"loss",
           {{"lambda_bce", c.loss.lambda_bce},
            {"lambda_kd", c.loss.lambda_kd},
            {"num_classes", c.loss.num_classes}}}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.use_graph = j.at("use_graph").get<bool>();
    c.caption_dim = j.at("caption_dim").get<std::size_t>();
    const auto& g = j.at("gnn");
    c.gnn.arch = enum_from_string<GnnArch>(g.at("arch").get<std::string>(), "gnn.arch");
    c.gnn.layers = g.at("layers").get<int>();
    c.gnn.input_dim = g.at("input_dim").get<std::size_t>();
    c.gnn.hidden_dim = g.at("hidden_dim").get<std::size_t>();
    c.gnn.output_dim = g.at("output_dim").get<std::size_t>();
    c.gnn.activation = enum_from_string<Activation>(g.at("activation").get<std::string>(), "gnn.activation");
    c.gnn.relation_norm =
        enum_from_string<RelationNorm>(g.at("relation_norm").get<std::string>(), "gnn.relation_norm");
    c.gnn.num_bases = g.at("num_bases").get<std::size_t>();
    c.gnn.num_relations = g.at("num_relations").get<std::size_t>();
    const auto& a = j.at("align");
    c.align.image_dim = a.at("image_dim").get<std::size_t>();
    c.align.text_dim = a.at("text_dim").get<std::size_t>();
    c.align.dim = a.at("dim").get<std::size_t>();
    c.align.mapping_layers = a.at("mapping_layers").get<int>();
    const auto& f = j.at("fusion");
    c.fusion.kind = enum_from_string<FusionKind>(f.at("kind").get<std::string>(), "fusion.kind");
    c.fusion.dim = f.at("dim").get<std::size_t>();
    c.fusion.han_levels = f.at("han_levels").get<int>();
    c.fusion.bilinear_mode =
        enum_from_string<BilinearMode>(f.at("bilinear_mode").get<std::string>(), "fusion.bilinear_mode");
    const auto& l = j.at("loss");
    c.loss.lambda_bce = l.at("lambda_bce").get<double>();
    c.loss.lambda_kd = l.at("lambda_kd").get<double>();
    c.loss.num_classes = l.at("num_classes").get<int>();
    c.finalize();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
}

// One training or inference example with embeddings resolved to doubles.
struct Example {
  std::string id;
  std::vector<double> image;
  std::vector<double> text;
  std::vector<double> caption;  // empty at inference
  int label = 0;
  std::shared_ptr<const WorkingGraph> graph;
};

struct ForwardResult {
  Var logits;
  Var student;
  Var classification;
  Var kd;  // invalid unless training with KD
  Var loss;
};

inline constexpr const char* kKdProjection = "kd.projection";

class Model {
 public:
  explicit Model(ModelConfig config) : config_(std::move(config)) {
    config_.finalize();
    align_ = std::make_unique<AlignHead>(config_.align);
    if (config_.use_graph) {
      gnn_ = std::make_unique<GnnEncoder>(config_.gnn);
      fusion_ = std::make_unique<FusionModule>(config_.fusion);
    }
  }

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  void init(std::uint64_t seed) {
    params_ = ParameterStore();
    Rng rng(seed);
    align_->init(params_, rng);
    if (config_.use_graph) {
      gnn_->init(params_, rng);
      fusion_->init(params_, rng);
    }
    const std::size_t head_in = config_.use_graph ? config_.fusion.output_dim() : config_.align.dim;
    params_.add("classifier.weight", glorot_uniform(head_in, config_.output_units(), rng));
    params_.add("classifier.bias", Tensor(1, config_.output_units()));
    if (config_.loss.kd_enabled()) {
      params_.add(kKdProjection, glorot_uniform(config_.caption_dim, config_.align.dim, rng));
    }
  }

  // With `training`, also builds the loss (reading the caption embedding when
  // KD is enabled). Inference never touches the caption.
  ForwardResult forward(Tape& tape, const Example& ex, bool training) { return forward(tape, params_, ex, training); }

  // Same, reading parameters from `params` (which must match this model's layout).
  ForwardResult forward(Tape& tape, ParameterStore& params, const Example& ex, bool training) const {
    ForwardResult out;
    const Var image = tape.constant(Tensor::row(ex.image));
    const Var text = tape.constant(Tensor::row(ex.text));
    out.student = align_fuse(image, text, align_->weights(tape, params));
    Var features = out.student;
    if (config_.use_graph) {
      if (!ex.graph) throw ContractError("example " + ex.id + " has no working graph");
      const Var pooled = gnn_->encode_pooled(tape, params, *ex.graph);
      features = fusion_->apply(tape, params, pooled, out.student);
    }
    out.logits = ad::add(ad::matmul(features, tape.parameter(params.get("classifier.weight"))),
                         tape.parameter(params.get("classifier.bias")));
    if (!training) return out;

    out.classification = classification_loss(out.logits, ex.label);
    if (config_.loss.kd_enabled()) {
      if (ex.caption.empty()) throw ContractError("example " + ex.id + " lacks a caption embedding for KD");
      out.kd = kd_loss(out.student, tape.constant(Tensor::row(ex.caption)),
                       tape.parameter(params.get(kKdProjection)));
    }
    out.loss = total_loss(out.classification, out.kd, config_.loss.lambda_bce, config_.loss.lambda_kd);
    return out;
  }

  // Positive-class probability (binary) or class probabilities (K-class).
  std::vector<double> predict(const Example& ex) {
    Tape tape;
    const Tensor& z = forward(tape, ex, false).logits.value();
    if (z.cols() == 1) return {sigmoid(z[0])};
    std::vector<double> p(z.cols());
    double peak = z[0];
    for (std::size_t c = 1; c < z.cols(); ++c) peak = std::max(peak, z[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) total += (p[c] = std::exp(z[c] - peak));
    for (double& v : p) v /= total;
    return p;
  }

 private:
  ModelConfig config_;
  ParameterStore params_;
  std::unique_ptr<AlignHead> align_;
  std::unique_ptr<GnnEncoder> gnn_;
  std::unique_ptr<FusionModule> fusion_;
};

}  // namespace kinfuse
