// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "kinfuse/errors.hpp"
#include "kinfuse/parameters.hpp"

namespace kinfuse {

// Linear warm-up from 0 to base_lr, then linear decay to 0 at total_steps.
inline double lr_schedule(std::size_t step, std::size_t total_steps, double warmup_fraction,
                          double base_lr) {
  if (total_steps == 0) throw ConfigError("lr schedule needs total_steps > 0");
  if (step > total_steps) throw ContractError("lr schedule step beyond total_steps");
  const auto warmup = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (warmup >= total_steps) return base_lr;
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup);
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with bias-corrected moments and decoupled weight decay:
//   w <- w - lr * wd * w - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  const AdamWConfig& config() const noexcept { return config_; }
  std::size_t step_count() const noexcept { return step_; }

  void step(ParameterStore& params, double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + name);
      auto& [m, v] = moments_[name];
      if (m.empty()) {
        m = Tensor(p.value.rows(), p.value.cols());
        v = Tensor(p.value.rows(), p.value.cols());
      }
      const bool has_grad = p.grad.same_shape(p.value);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = has_grad ? p.grad[i] : 0.0;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p.value[i] -= lr * config_.weight_decay * p.value[i];
        p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    }
  }

 private:
  AdamWConfig config_;
  std::size_t step_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
inline double clip_grad_norm(ParameterStore& params, double max_norm) {
  double total = 0.0;
  for (auto& [name, p] : params) {
    for (double g : p.grad.data()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, p] : params) {
      for (double& g : p.grad.data()) g *= factor;
    }
  }
  return norm;
}

}  // namespace kinfuse
