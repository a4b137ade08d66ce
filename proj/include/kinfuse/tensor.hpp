// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kinfuse/errors.hpp"

namespace kinfuse {

// Dense row-major matrix of doubles. Vectors are 1 x n rows.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string());
    }
  }

  static Tensor row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
  }

  static Tensor row(std::span<const double> values) {
    return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
  }

  static Tensor scalar(double value) { return Tensor(1, 1, value); }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
      if (r.size() != m) throw DimensionError("ragged rows in from_rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor(n, m, std::move(data));
  }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  // Value of a 1 x 1 tensor.
  double item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string());
    return data_[0];
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor& operator+=(const Tensor& other) {
    if (!same_shape(other)) {
      throw DimensionError("+= between " + shape_string() + " and " + other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace kinfuse
