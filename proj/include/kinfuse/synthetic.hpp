// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic meme corpus with a planted knowledge signal.
//
// Every record mentions its own anchor concept. The anchor is linked to a
// sample of "relevant" concepts drawn from a pool tied to the record's label,
// and to off-topic distractors. Relevant concept embeddings share a topic
// direction with the record context and carry a small label-dependent shift;
// distractors carry neither. Image and text embeddings hold only a weak label
// signal; the caption embedding holds a strong one.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/dataio.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/random.hpp"

namespace kinfuse {

struct SyntheticConfig {
  std::size_t records = 400;
  std::size_t train = 240;
  std::size_t val = 80;  // remainder is the test split
  std::uint64_t seed = 7;

  std::size_t node_dim = 16;
  std::size_t image_dim = 16;
  std::size_t text_dim = 16;
  std::size_t caption_dim = 16;

  std::size_t pool_size = 300;  // concepts per label pool
  std::size_t distractor_pool = 600;
  std::size_t relevant_per_record = 120;
  std::size_t distractors_per_record = 100;

  double topic_scale = 3.0;     // shared topic component of relevant nodes and contexts
  double node_signal = 0.4;     // label shift of relevant node embeddings
  double node_noise = 1.0;
  double context_noise = 0.5;
  double embed_signal = 0.5;    // label shift of image/text embeddings
  double embed_offset = 1.0;
  double embed_noise = 1.0;
  double caption_signal = 1.5;
  double caption_noise = 0.5;

  void validate() const {
    if (records == 0 || train == 0 || val == 0 || train + val >= records) {
      throw ConfigError("synthetic: need nonempty train, val and test splits");
    }
    if (relevant_per_record > pool_size || distractors_per_record > distractor_pool) {
      throw ConfigError("synthetic: per-record samples exceed pool sizes");
    }
    if (node_dim == 0 || image_dim == 0 || text_dim == 0 || caption_dim == 0) {
      throw ConfigError("synthetic: dims must be >= 1");
    }
  }
};

struct SyntheticRecord {
  std::string id;
  std::string text;
  std::string caption;
  int label = 0;
  std::string split;
  std::vector<double> image;
  std::vector<double> text_embedding;
  std::vector<double> caption_embedding;
  std::vector<double> context;
};

struct SyntheticEdge {
  std::string head;
  std::string relation;
  std::string tail;
  double weight = 1.0;
};

struct SyntheticDataset {
  SyntheticConfig config;
  std::vector<SyntheticEdge> edges;
  NodeEmbeddingTable node_embeddings;
  std::vector<SyntheticRecord> records;
};

namespace detail {

inline std::vector<double> gaussian(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<double> unit(Rng& rng, std::size_t n) {
  std::vector<double> v = gaussian(rng, n, 1.0);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// Values as stored on disk, so in-memory and file-based runs agree.
inline std::vector<double> as_f32(std::vector<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return v;
}

inline std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

// k distinct indices from [0, n), ascending.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace detail

inline SyntheticDataset make_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SyntheticDataset ds{cfg, {}, NodeEmbeddingTable(cfg.node_dim), {}};

  const auto topic = detail::unit(rng, cfg.node_dim);
  const auto label_dir = detail::unit(rng, cfg.node_dim);
  const auto image_dir = detail::unit(rng, cfg.image_dim);
  const auto image_mean = detail::unit(rng, cfg.image_dim);
  const auto text_dir = detail::unit(rng, cfg.text_dim);
  const auto text_mean = detail::unit(rng, cfg.text_dim);
  const auto caption_dir = detail::unit(rng, cfg.caption_dim);

  // Concept names carry no hint of their role: pool and distractor concepts
  // are interleaved under one shuffled numbering.
  const std::size_t concept_total = 2 * cfg.pool_size + cfg.distractor_pool;
  std::vector<std::size_t> name_of(concept_total);
  for (std::size_t i = 0; i < concept_total; ++i) name_of[i] = i;
  rng.shuffle(name_of);
  auto concept_name = [&](std::size_t role_index) { return "concept_" + detail::padded(name_of[role_index]); };

  std::vector<std::pair<std::string, std::vector<double>>> concept_rows;
  for (std::size_t i = 0; i < concept_total; ++i) {
    std::vector<double> v = detail::gaussian(rng, cfg.node_dim, cfg.node_noise);
    if (i < 2 * cfg.pool_size) {
      const double sign = i < cfg.pool_size ? -1.0 : 1.0;
      detail::axpy(v, cfg.topic_scale, topic);
      detail::axpy(v, sign * cfg.node_signal, label_dir);
    }
    concept_rows.emplace_back(concept_name(i), detail::as_f32(std::move(v)));
  }
  std::sort(concept_rows.begin(), concept_rows.end());
  for (const auto& [name, v] : concept_rows) ds.node_embeddings.add(name, v);

  std::vector<int> labels(cfg.records);
  for (std::size_t i = 0; i < cfg.records; ++i) labels[i] = static_cast<int>(i % 2);
  rng.shuffle(labels);

  for (std::size_t i = 0; i < cfg.records; ++i) {
    SyntheticRecord r;
    r.id = "m" + detail::padded(i);
    r.label = labels[i];
    r.split = i < cfg.train ? "train" : (i < cfg.train + cfg.val ? "val" : "test");
    const double y = r.label == 1 ? 1.0 : -1.0;
    const std::string anchor = "topic_" + detail::padded(i);
    r.text = "when the topic " + detail::padded(i) + " shows up again";
    r.caption = "a picture about topic " + detail::padded(i) + " and a person";

    std::vector<double> anchor_vec = detail::gaussian(rng, cfg.node_dim, cfg.node_noise);
    ds.node_embeddings.add(anchor, detail::as_f32(std::move(anchor_vec)));

    const std::size_t pool_base = r.label == 1 ? cfg.pool_size : 0;
    for (std::size_t j : detail::sample_without_replacement(rng, cfg.pool_size, cfg.relevant_per_record)) {
      ds.edges.push_back({anchor, "RelatedTo", concept_name(pool_base + j), 1.0});
    }
    for (std::size_t j :
         detail::sample_without_replacement(rng, cfg.distractor_pool, cfg.distractors_per_record)) {
      ds.edges.push_back({anchor, "RelatedTo", concept_name(2 * cfg.pool_size + j), 1.0});
    }

    r.context = detail::gaussian(rng, cfg.node_dim, cfg.context_noise);
    detail::axpy(r.context, cfg.topic_scale, topic);
    r.image = detail::gaussian(rng, cfg.image_dim, cfg.embed_noise);
    detail::axpy(r.image, cfg.embed_offset, image_mean);
    detail::axpy(r.image, y * cfg.embed_signal, image_dir);
    r.text_embedding = detail::gaussian(rng, cfg.text_dim, cfg.embed_noise);
    detail::axpy(r.text_embedding, cfg.embed_offset, text_mean);
    detail::axpy(r.text_embedding, y * cfg.embed_signal, text_dir);
    r.caption_embedding = detail::gaussian(rng, cfg.caption_dim, cfg.caption_noise);
    detail::axpy(r.caption_embedding, y * cfg.caption_signal, caption_dir);

    r.context = detail::as_f32(std::move(r.context));
    r.image = detail::as_f32(std::move(r.image));
    r.text_embedding = detail::as_f32(std::move(r.text_embedding));
    r.caption_embedding = detail::as_f32(std::move(r.caption_embedding));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// Writes kg.tsv, node_embeddings.txt, embeddings.blob and manifest.jsonl.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream kg(dir / "kg.tsv");
    kg << "# head\trelation\ttail\tweight\n";
    for (const auto& e : ds.edges) kg << e.head << '\t' << e.relation << '\t' << e.tail << '\t' << e.weight << '\n';
    if (!kg) throw DataError("failed writing " + (dir / "kg.tsv").string());
  }
  {
    std::ofstream emb(dir / "node_embeddings.txt");
    write_node_embeddings(emb, ds.node_embeddings);
    if (!emb) throw DataError("failed writing node embeddings");
  }
  BlobWriter blob;
  for (const auto& r : ds.records) {
    blob.add(r.id + "/image", r.image);
    blob.add(r.id + "/text", r.text_embedding);
    blob.add(r.id + "/caption", r.caption_embedding);
    blob.add(r.id + "/context", r.context);
  }
  blob.write((dir / "embeddings.blob").string());
  std::ofstream manifest(dir / "manifest.jsonl");
  nlohmann::json meta = {{"generator", "kinfuse synthetic"},
                         {"seed", ds.config.seed},
                         {"records", ds.config.records},
                         {"caption_embedding", "synthetic teacher vector"}};
  manifest << manifest_header(meta).dump() << '\n';
  for (const auto& r : ds.records) {
    nlohmann::json emb = {{"image", blob_ref("embeddings.blob", r.id + "/image")},
                          {"text", blob_ref("embeddings.blob", r.id + "/text")},
                          {"caption", blob_ref("embeddings.blob", r.id + "/caption")},
                          {"context", blob_ref("embeddings.blob", r.id + "/context")}};
    manifest << manifest_record(r.id, r.text, r.caption, r.label, r.split, std::move(emb)).dump() << '\n';
  }
  if (!manifest) throw DataError("failed writing manifest");
}

}  // namespace kinfuse
