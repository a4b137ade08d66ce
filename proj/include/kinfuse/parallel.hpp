// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Order-preserving parallel map over an index range.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace kinfuse {

// Calls fn(i) for i in [0, n) on up to `workers` threads and returns the
// results in index order. If any call throws, the exception of the smallest
// failing index is rethrown after all workers stop.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t workers, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace kinfuse
