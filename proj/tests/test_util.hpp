// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/random.hpp"
#include "kinfuse/tensor.hpp"

namespace kinfuse::testing {

inline Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Contracts an arbitrary-shaped output to a scalar with fixed random weights,
// so every output entry contributes a distinct gradient.
inline Var contract(const Var& out, std::uint64_t seed) {
  Rng rng(seed);
  const Var weights = out.tape()->constant(random_tensor(rng, out.rows(), out.cols()));
  return ad::sum(ad::mul(out, weights));
}

inline std::string data_path(const std::string& name) {
  return std::string(KINFUSE_TEST_DATA_DIR) + "/" + name;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("kinfuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace kinfuse::testing
