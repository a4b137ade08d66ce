// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kinfuse {

// Every error raised by the library derives from Error. The category maps
// onto the CLI exit code (config 2, data 3, numeric 4).
enum class ErrorCategory { config, data, numeric, contract };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Shape mismatch between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorCategory::numeric, "dimension error: " + what) {}
};

// NaN/Inf produced or consumed.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::numeric, "numeric error: " + what) {}
};

// Caller violated a precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::contract, "contract error: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::config, "config error: " + what) {}
};

// Malformed or inconsistent input files, failed lookups, coverage gaps.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorCategory::data, "data error: " + what) {}
};

inline int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numeric: return 4;
    case ErrorCategory::contract: return 4;
  }
  return 1;
}

}  // namespace kinfuse
