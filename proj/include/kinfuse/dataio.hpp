// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// File contracts between the core and the embedding extractor: the JSON-lines
// dataset manifest, float32 embedding blobs, and node-label embedding tables.

#pragma once

#include <array>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinfuse/binary_io.hpp"
#include "kinfuse/errors.hpp"

namespace kinfuse {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Node-label embeddings: text table, "count dim" header then "label v1 .. vd".

class NodeEmbeddingTable {
 public:
  NodeEmbeddingTable() = default;
  explicit NodeEmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  void add(const std::string& label, std::span<const double> values) {
    if (values.size() != dim_) {
      throw DataError("embedding for '" + label + "' has dim " + std::to_string(values.size()) +
                      ", table dim is " + std::to_string(dim_));
    }
    if (!index_.try_emplace(label, labels_.size()).second) {
      throw DataError("duplicate node embedding label '" + label + "'");
    }
    labels_.push_back(label);
    data_.insert(data_.end(), values.begin(), values.end());
  }

  std::optional<std::span<const double>> find(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) return std::nullopt;
    return std::span<const double>(data_).subspan(it->second * dim_, dim_);
  }

  std::span<const double> at(const std::string& label) const {
    auto v = find(label);
    if (!v) throw DataError("lookup error: no node embedding for '" + label + "'");
    return *v;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
};

inline NodeEmbeddingTable read_node_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("node embeddings: missing header");
  std::istringstream header(line);
  long long count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim <= 0) {
    throw DataError("node embeddings line 1: expected 'count dim' header");
  }
  NodeEmbeddingTable table(static_cast<std::size_t>(dim));
  std::size_t line_no = 1;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string label;
    ls >> label;
    values.clear();
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const float f = std::strtof(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) {
        throw DataError("node embeddings line " + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
      values.push_back(static_cast<double>(f));
    }
    if (values.size() != table.dim()) {
      throw DataError("node embeddings line " + std::to_string(line_no) + ": dim inconsistency (" +
                      std::to_string(values.size()) + " values, expected " +
                      std::to_string(table.dim()) + ")");
    }
    table.add(label, values);
  }
  if (table.size() != static_cast<std::size_t>(count)) {
    throw DataError("node embeddings: header announces " + std::to_string(count) + " entries, found " +
                    std::to_string(table.size()));
  }
  return table;
}

inline NodeEmbeddingTable load_node_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node embeddings " + path);
  return read_node_embeddings(in);
}

// Values are narrowed to float32 and printed with 9 significant digits, which
// round-trips every float exactly.
inline void write_node_embeddings(std::ostream& out, const NodeEmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (const std::string& label : table.labels()) {
    out << label;
    for (double v : table.at(label)) {
      std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(static_cast<float>(v)));
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Embedding blobs: magic, u64 header length, JSON index, float32 payload.

class BlobReader {
 public:
  struct Entry {
    std::uint64_t offset;  // in floats from the start of the payload
    std::uint64_t dim;
  };

  explicit BlobReader(std::string path) : path_(std::move(path)) {
    std::ifstream is(path_, std::ios::binary);
    if (!is) throw DataError("cannot open embedding blob " + path_);
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw DataError(path_ + ": not an embedding blob");
    const std::uint64_t header_len = binio::read_u64(is);
    const auto here = is.tellg();
    is.seekg(0, std::ios::end);
    const std::uint64_t size = static_cast<std::uint64_t>(is.tellg());
    is.seekg(here);
    if (header_len > size - 16) throw DataError(path_ + ": truncated header");
    std::string header(header_len, '\0');
    if (!is.read(header.data(), static_cast<std::streamsize>(header_len))) {
      throw DataError(path_ + ": truncated header");
    }
    payload_start_ = 16 + header_len;
    is.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(is.tellg());
    const std::uint64_t payload_floats = (file_size - payload_start_) / 4;
    auto j = nlohmann::json::parse(header, nullptr, false);
    if (j.is_discarded() || !j.contains("entries") || !j["entries"].is_object()) {
      throw DataError(path_ + ": malformed blob index");
    }
    if (j.value("schema_version", 0) != kSchemaVersion) {
      throw DataError(path_ + ": unsupported blob schema_version");
    }
    for (const auto& [name, e] : j["entries"].items()) {
      Entry entry{e.at("offset").get<std::uint64_t>(), e.at("dim").get<std::uint64_t>()};
      if (entry.dim == 0 || entry.offset + entry.dim > payload_floats) {
        throw DataError(path_ + ": entry '" + name + "' lies outside the payload");
      }
      entries_.emplace(name, entry);
    }
  }

  const std::string& path() const noexcept { return path_; }
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }

  std::size_t dim(const std::string& key) const { return entry(key).dim; }

  std::vector<double> read(const std::string& key) const {
    const Entry& e = entry(key);
    std::ifstream is(path_, std::ios::binary);
    is.seekg(static_cast<std::streamoff>(payload_start_ + e.offset * 4));
    std::vector<unsigned char> raw(e.dim * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw DataError(path_ + ": short read for '" + key + "'");
    }
    std::vector<double> out(e.dim);
    for (std::size_t i = 0; i < e.dim; ++i) out[i] = binio::decode_f32(raw.data() + 4 * i);
    return out;
  }

  static constexpr std::array<char, 8> kMagic = {'K', 'F', 'E', 'M', 'B', 'L', 'O', 'B'};

 private:
  const Entry& entry(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw DataError(path_ + ": no entry '" + key + "'");
    return it->second;
  }

  std::string path_;
  std::uint64_t payload_start_ = 0;
  std::map<std::string, Entry> entries_;
};

class BlobWriter {
 public:
  void add(const std::string& key, std::span<const double> values) {
    if (values.empty()) throw DataError("blob entry '" + key + "' is empty");
    if (!index_.emplace(key, std::make_pair(payload_.size(), values.size())).second) {
      throw DataError("duplicate blob entry '" + key + "'");
    }
    for (double v : values) payload_.push_back(static_cast<float>(v));
  }

  void write(const std::string& path) const {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [key, loc] : index_) entries[key] = {{"offset", loc.first}, {"dim", loc.second}};
    const std::string header =
        nlohmann::json{{"schema_version", kSchemaVersion}, {"entries", entries}}.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(BlobReader::kMagic.data(), BlobReader::kMagic.size());
    binio::write_u64(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (float f : payload_) binio::write_f32(os, f);
    if (!os) throw DataError("failed writing " + path);
  }

 private:
  std::map<std::string, std::pair<std::size_t, std::size_t>> index_;
  std::vector<float> payload_;
};

// ---------------------------------------------------------------------------
// Manifest

// Either an inline vector (test fixtures) or a key into a lazily read blob.
class EmbeddingRef {
 public:
  EmbeddingRef() = default;
  explicit EmbeddingRef(std::vector<double> inline_values) : inline_(std::move(inline_values)) {}
  EmbeddingRef(std::shared_ptr<const BlobReader> blob, std::string key)
      : blob_(std::move(blob)), key_(std::move(key)) {}

  bool empty() const noexcept { return blob_ == nullptr && inline_.empty(); }
  bool is_inline() const noexcept { return blob_ == nullptr; }
  std::size_t dim() const { return blob_ ? blob_->dim(key_) : inline_.size(); }
  const std::string& key() const noexcept { return key_; }
  const BlobReader* blob() const noexcept { return blob_.get(); }

  std::vector<double> resolve() const { return blob_ ? blob_->read(key_) : inline_; }

 private:
  std::shared_ptr<const BlobReader> blob_;
  std::string key_;
  std::vector<double> inline_;
};

struct MemeRecord {
  std::string id;
  std::string text;
  std::string caption;
  int label = 0;
  std::string split;
  EmbeddingRef image;
  EmbeddingRef text_embedding;
  EmbeddingRef caption_embedding;  // may be empty when KD is disabled
  EmbeddingRef context;
};

struct ManifestOptions {
  bool require_caption = true;
  int num_classes = 2;
};

struct ManifestDims {
  std::size_t image = 0;
  std::size_t text = 0;
  std::size_t caption = 0;
  std::size_t context = 0;
};

struct Manifest {
  ManifestDims dims;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<MemeRecord> records;

  std::vector<const MemeRecord*> split(const std::string& tag) const {
    std::vector<const MemeRecord*> out;
    for (const auto& r : records) {
      if (r.split == tag) out.push_back(&r);
    }
    return out;
  }
};

namespace detail {

inline EmbeddingRef parse_embedding_ref(
    const nlohmann::json& j, const std::filesystem::path& base,
    std::map<std::string, std::shared_ptr<const BlobReader>>& blobs, const std::string& where) {
  if (j.is_array()) {
    std::vector<double> values;
    for (const auto& v : j) {
      if (!v.is_number()) throw DataError(where + ": inline embedding holds a non-number");
      values.push_back(static_cast<double>(static_cast<float>(v.get<double>())));
    }
    if (values.empty()) throw DataError(where + ": inline embedding is empty");
    return EmbeddingRef(std::move(values));
  }
  if (j.is_object() && j.contains("blob") && j.contains("key")) {
    const std::filesystem::path p = base / j["blob"].get<std::string>();
    const std::string key = p.lexically_normal().string();
    auto it = blobs.find(key);
    if (it == blobs.end()) it = blobs.emplace(key, std::make_shared<const BlobReader>(key)).first;
    const std::string entry = j["key"].get<std::string>();
    if (!it->second->contains(entry)) {
      throw DataError(where + ": dangling embedding ref '" + entry + "' in " + key);
    }
    return EmbeddingRef(it->second, entry);
  }
  throw DataError(where + ": embedding must be an array or {blob, key}");
}

inline void check_dim(std::size_t& expected, const EmbeddingRef& ref, const std::string& where,
                      const char* field) {
  if (ref.empty()) return;
  if (expected == 0) expected = ref.dim();
  if (ref.dim() != expected) {
    throw DataError(where + ": " + field + " embedding dim " + std::to_string(ref.dim()) +
                    " differs from " + std::to_string(expected));
  }
}

}  // namespace detail

// Reads a JSON-lines manifest: a header line carrying schema_version, then one
// record per line. Blob references resolve relative to the manifest.
inline Manifest load_manifest(const std::string& path, const ManifestOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::map<std::string, std::shared_ptr<const BlobReader>> blobs;
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_map<std::string, std::size_t> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + " line " + std::to_string(line_no);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": not a JSON object");
    if (!have_header) {
      if (!j.contains("schema_version")) throw DataError(where + ": missing schema_version header");
      if (j["schema_version"] != kSchemaVersion) {
        throw DataError(where + ": unsupported schema_version " + j["schema_version"].dump());
      }
      if (j.contains("metadata")) m.metadata = j["metadata"];
      have_header = true;
      continue;
    }
    try {
      MemeRecord r;
      r.id = j.at("id").get<std::string>();
      r.text = j.value("text", std::string());
      r.caption = j.value("caption", std::string());
      r.label = j.at("label").get<int>();
      r.split = j.at("split").get<std::string>();
      if (r.id.empty()) throw DataError(where + ": empty id");
      if (r.label < 0 || r.label >= options.num_classes) {
        throw DataError(where + ": label " + std::to_string(r.label) + " outside [0, " +
                        std::to_string(options.num_classes) + ")");
      }
      if (!seen_ids.emplace(r.id, line_no).second) throw DataError(where + ": duplicate id " + r.id);
      const auto& emb = j.at("embeddings");
      r.image = detail::parse_embedding_ref(emb.at("image"), base, blobs, where + " image");
      r.text_embedding = detail::parse_embedding_ref(emb.at("text"), base, blobs, where + " text");
      r.context = detail::parse_embedding_ref(emb.at("context"), base, blobs, where + " context");
      if (emb.contains("caption") && !emb["caption"].is_null()) {
        r.caption_embedding =
            detail::parse_embedding_ref(emb["caption"], base, blobs, where + " caption");
      } else if (options.require_caption) {
        throw DataError(where + ": record " + r.id +
                        " lacks a caption embedding, required while the KD loss is enabled");
      }
      detail::check_dim(m.dims.image, r.image, where, "image");
      detail::check_dim(m.dims.text, r.text_embedding, where, "text");
      detail::check_dim(m.dims.caption, r.caption_embedding, where, "caption");
      detail::check_dim(m.dims.context, r.context, where, "context");
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": schema violation: " + e.what());
    }
  }
  if (!have_header) throw DataError(path + ": empty manifest");
  return m;
}

inline nlohmann::json inline_ref(std::span<const double> v) {
  nlohmann::json arr = nlohmann::json::array();
  for (double x : v) arr.push_back(static_cast<double>(static_cast<float>(x)));
  return arr;
}

inline nlohmann::json blob_ref(const std::string& blob, const std::string& key) {
  return {{"blob", blob}, {"key", key}};
}

// Serialized record line with caller-provided embedding refs.
inline nlohmann::json manifest_record(const std::string& id, const std::string& text,
                                      const std::string& caption, int label,
                                      const std::string& split, nlohmann::json embeddings) {
  return {{"id", id},       {"text", text},   {"caption", caption},
          {"label", label}, {"split", split}, {"embeddings", std::move(embeddings)}};
}

inline nlohmann::json manifest_header(nlohmann::json metadata = nlohmann::json::object()) {
  return {{"schema_version", kSchemaVersion}, {"metadata", std::move(metadata)}};
}

}  // namespace kinfuse
