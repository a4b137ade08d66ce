// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference verification of tape gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/parameters.hpp"
#include "kinfuse/tensor.hpp"

namespace kinfuse {

// Builds a scalar loss on `tape` from leaves holding `inputs` (same order).
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> leaves)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates whose stencil straddles a kink
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
// true derivative is ~0 from being judged on finite-difference noise alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

// A relu-style kink inside [x - h, x + h] makes the central difference
// average two different slopes, while the analytic value is the slope on one
// side. Coordinates showing that signature are skipped, not judged.
inline bool straddles_kink(double analytic, double down, double centre, double up, double step) {
  const double numeric = (up - down) / (2.0 * step);
  const double right = (up - centre) / step;
  const double left = (centre - down) / step;
  const double miss = std::abs(analytic - numeric);
  return relative_error(analytic, numeric) > 1e-7 &&
         std::min(std::abs(analytic - right), std::abs(analytic - left)) < 0.1 * miss;
}

inline double evaluate_scalar(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.constant(t));
  return fn(tape, leaves).value().item();
}

inline GradCheckResult check_gradients(const ScalarFn& fn, const std::vector<Tensor>& inputs,
                                       double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.variable(t));
    Var loss = fn(tape, leaves);
    tape.backward(loss);
    for (const Var& v : leaves) analytic.push_back(v.grad());
  }

  GradCheckResult result;
  const double centre = evaluate_scalar(fn, inputs);
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + step;
      const double up = evaluate_scalar(fn, probe);
      probe[k][i] = saved - step;
      const double down = evaluate_scalar(fn, probe);
      probe[k][i] = saved;
      const double a = analytic[k][i];
      if (straddles_kink(a, down, centre, up, step)) {
        ++result.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(a, numeric));
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      ++result.checked;
    }
  }
  return result;
}

// Same check against every entry of a parameter store. `loss` must bind
// parameters through tape.parameter() so their gradients are collected.
using ParameterLossFn = std::function<Var(Tape& tape)>;

inline GradCheckResult check_parameter_gradients(ParameterStore& params, const ParameterLossFn& loss,
                                                 double step = 1e-5) {
  params.zero_grad();
  {
    Tape tape;
    const Var l = loss(tape);
    tape.backward(l);
    tape.accumulate_parameter_gradients();
  }
  auto eval = [&] {
    Tape tape;
    return loss(tape).value().item();
  };
  GradCheckResult result;
  const double centre = eval();
  for (auto& [name, p] : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = eval();
      p.value[i] = saved - step;
      const double down = eval();
      p.value[i] = saved;
      const double a = p.grad[i];
      if (straddles_kink(a, down, centre, up, step)) {
        ++result.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(a, numeric));
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      ++result.checked;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace kinfuse
