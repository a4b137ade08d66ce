// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Student representation (align fusion of image and text embeddings) and the
// fusion of the pooled graph vector with that representation.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/parameters.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

// ---------------------------------------------------------------------------
// Align fusion

struct AlignConfig {
  std::size_t image_dim = 0;
  std::size_t text_dim = 0;
  std::size_t dim = 64;
  int mapping_layers = 1;

  void validate() const {
    if (image_dim < 1 || text_dim < 1 || dim < 1) throw ConfigError("align dims must be >= 1");
    if (mapping_layers < 0) throw ConfigError("align.mapping_layers must be >= 0");
  }
};

struct DenseWeights {
  Var weight;
  Var bias;
};

struct AlignWeights {
  Var project_image;  // image_dim x dim
  Var project_text;   // text_dim x dim
  std::vector<DenseWeights> mapping;
};

// s = FFN((e_img P_i) * (e_txt P_t)); ReLU between mapping layers, none after
// the last. No mapping layers means FFN is the identity.
inline Var align_fuse(const Var& image, const Var& text, const AlignWeights& w) {
  if (image.cols() != w.project_image.rows() || text.cols() != w.project_text.rows()) {
    throw DimensionError("align_fuse: embeddings " + image.value().shape_string() + ", " +
                         text.value().shape_string() + " do not match the head");
  }
  Var s = ad::mul(ad::matmul(image, w.project_image), ad::matmul(text, w.project_text));
  for (std::size_t i = 0; i < w.mapping.size(); ++i) {
    if (i > 0) s = ad::relu(s);
    s = ad::add(ad::matmul(s, w.mapping[i].weight), w.mapping[i].bias);
  }
  return s;
}

class AlignHead {
 public:
  explicit AlignHead(AlignConfig config) : config_(config) { config_.validate(); }

  const AlignConfig& config() const noexcept { return config_; }

  void init(ParameterStore& params, Rng& rng) const {
    params.add("align.project_image", glorot_uniform(config_.image_dim, config_.dim, rng));
    params.add("align.project_text", glorot_uniform(config_.text_dim, config_.dim, rng));
    for (int i = 0; i < config_.mapping_layers; ++i) {
      params.add(name(i, "weight"), glorot_uniform(config_.dim, config_.dim, rng));
      params.add(name(i, "bias"), Tensor(1, config_.dim));
    }
  }

  AlignWeights weights(Tape& tape, ParameterStore& params) const {
    AlignWeights w{tape.parameter(params.get("align.project_image")),
                   tape.parameter(params.get("align.project_text")),
                   {}};
    for (int i = 0; i < config_.mapping_layers; ++i) {
      w.mapping.push_back({tape.parameter(params.get(name(i, "weight"))),
                           tape.parameter(params.get(name(i, "bias")))});
    }
    return w;
  }

 private:
  static std::string name(int i, const char* what) {
    return "align.mapping" + std::to_string(i) + "." + what;
  }

  AlignConfig config_;
};

// ---------------------------------------------------------------------------
// Graph / student fusion

enum class FusionKind { gated, bilinear, han, multiplicative };
enum class BilinearMode { factorized, dense };

struct FusionConfig {
  FusionKind kind = FusionKind::gated;
  std::size_t graph_dim = 0;      // pooled graph vector
  std::size_t distilled_dim = 0;  // student representation
  std::size_t dim = 64;           // shared dim after projection
  int han_levels = 2;
  BilinearMode bilinear_mode = BilinearMode::factorized;

  void validate() const {
    if (graph_dim < 1 || distilled_dim < 1 || dim < 1) throw ConfigError("fusion dims must be >= 1");
    if (kind == FusionKind::han && han_levels < 1) throw ConfigError("fusion.han_levels must be >= 1");
  }

  std::size_t output_dim() const {
    return kind == FusionKind::bilinear && bilinear_mode == BilinearMode::dense ? 1 : dim;
  }
};

// F = G * E_g + (1 - G) * E_m with G = sigmoid([E_g | E_m] W_g), W_g: 2d x d.
inline Var fuse_gated(const Var& graph, const Var& distilled, const Var& gate_weight) {
  if (graph.cols() != distilled.cols() || gate_weight.rows() != 2 * graph.cols() ||
      gate_weight.cols() != graph.cols()) {
    throw DimensionError("fuse_gated: inputs and gate weight disagree on dims");
  }
  const Var gate = ad::sigmoid(ad::matmul(ad::concat_cols({graph, distilled}), gate_weight));
  return ad::add(distilled, ad::mul(gate, ad::sub(graph, distilled)));
}

// Bank of rank-1 bilinear forms: F_j = E_g (u_j v_j^T) E_m^T = (E_g U)_j (E_m V)_j.
inline Var fuse_bilinear(const Var& graph, const Var& distilled, const Var& left, const Var& right) {
  if (graph.cols() != left.rows() || distilled.cols() != right.rows() || left.cols() != right.cols()) {
    throw DimensionError("fuse_bilinear: factor shapes do not match inputs");
  }
  return ad::mul(ad::matmul(graph, left), ad::matmul(distilled, right));
}

// Single dense bilinear form E_g W_b E_m^T (a 1 x 1 result).
inline Var fuse_bilinear_dense(const Var& graph, const Var& distilled, const Var& form) {
  if (graph.cols() != form.rows() || distilled.cols() != form.cols()) {
    throw DimensionError("fuse_bilinear_dense: form shape does not match inputs");
  }
  return ad::matmul(ad::matmul(graph, form), ad::reshape(distilled, distilled.cols(), 1));
}

// F = sum_l alpha_l ([E_g | E_m] W_l), alpha = softmax(level_logits).
inline Var fuse_han(const Var& graph, const Var& distilled, std::span<const Var> level_weights,
                    const Var& level_logits) {
  if (level_weights.empty()) throw ConfigError("HAN fusion needs at least one level");
  if (level_logits.rows() != 1 || level_logits.cols() != level_weights.size()) {
    throw DimensionError("fuse_han: one logit per level expected");
  }
  const Var joint = ad::concat_cols({graph, distilled});
  std::vector<Var> levels;
  for (const Var& w : level_weights) {
    if (w.rows() != joint.cols()) throw DimensionError("fuse_han: level weight rows != d_g + d_m");
    levels.push_back(ad::matmul(joint, w));
  }
  return ad::matmul(ad::softmax(level_logits), ad::concat_rows(levels));
}

// F = tanh(E_g W_m) * tanh(E_m W_m), one shared W_m.
inline Var fuse_multiplicative(const Var& graph, const Var& distilled, const Var& weight) {
  if (graph.cols() != distilled.cols() || weight.rows() != graph.cols()) {
    throw DimensionError("fuse_multiplicative: inputs must share the dim of W_m");
  }
  return ad::mul(ad::tanh(ad::matmul(graph, weight)), ad::tanh(ad::matmul(distilled, weight)));
}

// Projects both inputs to the shared dim, then applies the configured fusion.
class FusionModule {
 public:
  explicit FusionModule(FusionConfig config) : config_(config) { config_.validate(); }

  const FusionConfig& config() const noexcept { return config_; }

  void init(ParameterStore& params, Rng& rng) const {
    const std::size_t d = config_.dim;
    params.add("fusion.project_graph.weight", glorot_uniform(config_.graph_dim, d, rng));
    params.add("fusion.project_graph.bias", Tensor(1, d));
    params.add("fusion.project_distilled.weight", glorot_uniform(config_.distilled_dim, d, rng));
    params.add("fusion.project_distilled.bias", Tensor(1, d));
    switch (config_.kind) {
      case FusionKind::gated:
        params.add("fusion.gate", glorot_uniform(2 * d, d, rng));
        break;
      case FusionKind::bilinear:
        if (config_.bilinear_mode == BilinearMode::dense) {
          params.add("fusion.bilinear.form", glorot_uniform(d, d, rng));
        } else {
          params.add("fusion.bilinear.left", glorot_uniform(d, d, rng));
          params.add("fusion.bilinear.right", glorot_uniform(d, d, rng));
        }
        break;
      case FusionKind::han:
        for (int l = 0; l < config_.han_levels; ++l) {
          params.add("fusion.han.level" + std::to_string(l), glorot_uniform(2 * d, d, rng));
        }
        params.add("fusion.han.logits", Tensor(1, static_cast<std::size_t>(config_.han_levels)));
        break;
      case FusionKind::multiplicative:
        params.add("fusion.multiplicative", glorot_uniform(d, d, rng));
        break;
    }
  }

  Var apply(Tape& tape, ParameterStore& params, const Var& graph, const Var& distilled) const {
    auto p = [&](const std::string& n) { return tape.parameter(params.get(n)); };
    const Var eg = ad::add(ad::matmul(graph, p("fusion.project_graph.weight")), p("fusion.project_graph.bias"));
    const Var em = ad::add(ad::matmul(distilled, p("fusion.project_distilled.weight")),
                           p("fusion.project_distilled.bias"));
    switch (config_.kind) {
      case FusionKind::gated: return fuse_gated(eg, em, p("fusion.gate"));
      case FusionKind::bilinear:
        if (config_.bilinear_mode == BilinearMode::dense) return fuse_bilinear_dense(eg, em, p("fusion.bilinear.form"));
        return fuse_bilinear(eg, em, p("fusion.bilinear.left"), p("fusion.bilinear.right"));
      case FusionKind::han: {
        std::vector<Var> levels;
        for (int l = 0; l < config_.han_levels; ++l) levels.push_back(p("fusion.han.level" + std::to_string(l)));
        return fuse_han(eg, em, levels, p("fusion.han.logits"));
      }
      case FusionKind::multiplicative: return fuse_multiplicative(eg, em, p("fusion.multiplicative"));
    }
    throw ContractError("unknown fusion kind");
  }

 private:
  FusionConfig config_;
};

}  // namespace kinfuse
