// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/random.hpp"
#include "kinfuse/tensor.hpp"

namespace kinfuse {

// All trainable tensors of a model, keyed by dotted name. Iteration order is
// lexicographic by name, which fixes the order of optimizer updates and of
// checkpoint tensors.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw ContractError("parameter '" + name + "' registered twice");
    it->second.name = name;
    it->second.grad = Tensor(init.rows(), init.cols());
    it->second.value = std::move(init);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  const Parameter& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad = Tensor(p.value.rows(), p.value.cols());
  }

  std::size_t size() const noexcept { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, Parameter> params_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace kinfuse
