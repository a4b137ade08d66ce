// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/errors.hpp"

namespace kinfuse {

struct LossConfig {
  double lambda_bce = 0.5;
  double lambda_kd = 0.5;
  int num_classes = 2;

  bool kd_enabled() const noexcept { return lambda_kd > 0.0; }

  void validate() const {
    if (!(lambda_bce >= 0.0) || !(lambda_kd >= 0.0)) throw ConfigError("loss weights must be >= 0");
    if (!(lambda_bce + lambda_kd > 0.0)) throw ConfigError("loss weights must not both be zero");
    if (num_classes < 2) throw ConfigError("loss.num_classes must be >= 2");
  }
};

// Squared distance between the student vector and the projected teacher
// caption embedding. `projection` maps caption dim -> student dim.
inline Var kd_loss(const Var& student, const Var& caption, const Var& projection) {
  if (caption.cols() != projection.rows()) {
    throw DimensionError("kd_loss: caption dim " + std::to_string(caption.cols()) +
                         " does not match projection " + projection.value().shape_string());
  }
  const Var target = ad::matmul(caption, projection);
  if (!target.value().same_shape(student.value())) {
    throw DimensionError("kd_loss: projected caption " + target.value().shape_string() +
                         " vs student " + student.value().shape_string());
  }
  return ad::sq_l2_norm(ad::sub(student, target));
}

inline Var bce_loss(const Var& logit, int label) {
  if (label != 0 && label != 1) throw ContractError("bce_loss label must be 0 or 1");
  return ad::bce_with_logits(logit, static_cast<double>(label));
}

inline Var cross_entropy_loss(const Var& logits, int label) {
  return ad::softmax_cross_entropy(logits, static_cast<std::size_t>(label));
}

// Classification loss for binary (single logit) or K-class (K logits) heads.
inline Var classification_loss(const Var& logits, int label) {
  return logits.cols() == 1 ? bce_loss(logits, label) : cross_entropy_loss(logits, label);
}

// lambda_bce * classification + lambda_kd * kd. An invalid `kd` Var means the
// KD branch was not built (lambda_kd = 0 or inference).
inline Var total_loss(const Var& classification, const Var& kd, double lambda_bce, double lambda_kd) {
  const Var weighted = ad::scale(classification, lambda_bce);
  if (!kd.valid() || lambda_kd == 0.0) return weighted;
  return ad::add(weighted, ad::scale(kd, lambda_kd));
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace kinfuse
