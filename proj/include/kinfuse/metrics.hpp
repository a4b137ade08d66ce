// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/errors.hpp"

namespace kinfuse {

struct MetricsReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.5;
  // Set when a zero denominator forced precision/recall to 0.
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  std::string averaging = "binary";
};

// Probability that a random positive outscores a random negative, ties
// counting one half. Computed from average ranks in O(n log n).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += average_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("auc is undefined without both a positive and a negative example");
  }
  const double p = static_cast<double>(positives), n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

// Binary metrics; `scores` are positive-class probabilities.
inline MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                            double threshold = 0.5) {
  if (scores.size() != labels.size()) {
    throw DataError("metrics: " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw DataError("metrics on an empty set");
  MetricsReport r;
  r.count = scores.size();
  r.threshold = threshold;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("binary metrics need labels in {0, 1}");
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    has_pos = has_pos || actual;
    has_neg = has_neg || !actual;
    if (predicted && actual) ++r.tp;
    else if (predicted && !actual) ++r.fp;
    else if (!predicted && actual) ++r.fn;
    else ++r.tn;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.count);
  if (r.tp + r.fp == 0) {
    r.precision_degenerate = true;
  } else {
    r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  }
  if (r.tp + r.fn == 0) {
    r.recall_degenerate = true;
  } else {
    r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  }
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  if (has_pos && has_neg) r.auc = auc(scores, labels);
  return r;
}

// Accuracy and support-weighted precision/recall/F1 over `num_classes`.
inline MetricsReport multiclass_metrics(std::span<const int> predicted, std::span<const int> labels,
                                        int num_classes) {
  if (predicted.size() != labels.size()) throw DataError("metrics: length mismatch");
  if (predicted.empty()) throw DataError("metrics on an empty set");
  MetricsReport r;
  r.count = labels.size();
  r.averaging = "weighted";
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), pred_count(k, 0.0), support(k, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw DataError("metrics: class id outside [0, " + std::to_string(num_classes) + ")");
    }
    support[labels[i]] += 1.0;
    pred_count[predicted[i]] += 1.0;
    if (labels[i] == predicted[i]) {
      tp[labels[i]] += 1.0;
      ++correct;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0.0) continue;
    const double w = support[c] / static_cast<double>(r.count);
    double p = 0.0;
    if (pred_count[c] > 0.0) p = tp[c] / pred_count[c];
    else r.precision_degenerate = true;
    const double rc = tp[c] / support[c];
    r.precision += w * p;
    r.recall += w * rc;
    if (p + rc > 0.0) r.f1 += w * 2.0 * p * rc / (p + rc);
  }
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"count", r.count},
                      {"accuracy", r.accuracy},
                      {"precision", r.precision},
                      {"recall", r.recall},
                      {"f1", r.f1},
                      {"auc", r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr)},
                      {"averaging", r.averaging},
                      {"precision_degenerate", r.precision_degenerate},
                      {"recall_degenerate", r.recall_degenerate}};
  if (r.averaging == "binary") {
    j["threshold"] = r.threshold;
    j["counts"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
  }
  return j;
}

}  // namespace kinfuse
