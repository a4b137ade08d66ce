// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>
#include <string>
#include <vector>

#include "kinfuse/dataio.hpp"
#include "test_util.hpp"

namespace kinfuse {
namespace {

using testing::scratch_dir;
using testing::write_file;

std::string lines(std::initializer_list<nlohmann::json> items) {
  std::string out;
  for (const auto& j : items) out += j.dump() + "\n";
  return out;
}

nlohmann::json inline_embeddings(bool with_caption) {
  nlohmann::json e = {{"image", {1, 2}}, {"text", {0.5, 0, 1}}, {"context", {1, 1}}};
  if (with_caption) e["caption"] = {3, 4};
  return e;
}

TEST(Manifest, TwoInlineRecords) {
  const auto dir = scratch_dir("manifest_two");
  write_file(dir / "m.jsonl",
             lines({manifest_header({{"source", "unit"}}),
                    manifest_record("a", "islam is", "a man", 1, "train", inline_embeddings(true)),
                    manifest_record("b", "cats", "a cat", 0, "val", inline_embeddings(true))}));
  const Manifest m = load_manifest((dir / "m.jsonl").string());
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].id, "a");
  EXPECT_EQ(m.records[0].label, 1);
  EXPECT_EQ(m.records[1].split, "val");
  EXPECT_EQ(m.dims.image, 2u);
  EXPECT_EQ(m.dims.text, 3u);
  EXPECT_EQ(m.dims.caption, 2u);
  EXPECT_EQ(m.metadata["source"], "unit");
  EXPECT_EQ(m.split("train").size(), 1u);
  EXPECT_EQ(m.records[0].text_embedding.resolve(), (std::vector<double>{0.5, 0, 1}));
}

TEST(Manifest, MissingCaptionNamesRecordWhenRequired) {
  const auto dir = scratch_dir("manifest_caption");
  write_file(dir / "m.jsonl", lines({manifest_header(), manifest_record("a", "", "", 0, "train", inline_embeddings(true)),
                                      manifest_record("meme-42", "", "", 1, "train", inline_embeddings(false))}));
  try {
    load_manifest((dir / "m.jsonl").string());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("meme-42"), std::string::npos);
  }
  EXPECT_NO_THROW(load_manifest((dir / "m.jsonl").string(), {false, 2}));
}

TEST(Manifest, InlineAndBlobRefsAgree) {
  const auto dir = scratch_dir("manifest_blob");
  const std::vector<double> img{0.25, -1.5}, txt{1, 2, 3}, cap{0.1f, 0.2f}, ctx{7, 8};
  BlobWriter w;
  w.add("a/image", img);
  w.add("a/text", txt);
  w.add("a/caption", cap);
  w.add("a/context", ctx);
  w.write((dir / "emb.bin").string());
  const nlohmann::json blob = {{"image", blob_ref("emb.bin", "a/image")},
                               {"text", blob_ref("emb.bin", "a/text")},
                               {"caption", blob_ref("emb.bin", "a/caption")},
                               {"context", blob_ref("emb.bin", "a/context")}};
  const nlohmann::json inl = {
      {"image", inline_ref(img)}, {"text", inline_ref(txt)}, {"caption", inline_ref(cap)}, {"context", inline_ref(ctx)}};
  write_file(dir / "m.jsonl", lines({manifest_header(), manifest_record("a", "", "", 0, "train", blob),
                                      manifest_record("b", "", "", 0, "train", inl)}));
  const Manifest m = load_manifest((dir / "m.jsonl").string());
  EXPECT_FALSE(m.records[0].image.is_inline());
  EXPECT_TRUE(m.records[1].image.is_inline());
  EXPECT_EQ(m.records[0].image.resolve(), m.records[1].image.resolve());
  EXPECT_EQ(m.records[0].text_embedding.resolve(), m.records[1].text_embedding.resolve());
  EXPECT_EQ(m.records[0].caption_embedding.resolve(), m.records[1].caption_embedding.resolve());
  EXPECT_EQ(m.records[0].context.resolve(), m.records[1].context.resolve());
}

TEST(Manifest, SchemaErrors) {
  const auto dir = scratch_dir("manifest_errors");
  const auto path = (dir / "m.jsonl").string();
  const auto expect_data_error = [&](const std::string& text) {
    write_file(path, text);
    EXPECT_THROW(load_manifest(path), DataError) << text;
  };
  expect_data_error("");
  expect_data_error(lines({{{"schema_version", 99}}}));
  expect_data_error(lines({manifest_record("a", "", "", 0, "train", inline_embeddings(true))}));
  expect_data_error(lines({manifest_header(), manifest_record("a", "", "", 2, "train", inline_embeddings(true))}));
  expect_data_error(lines({manifest_header(), manifest_record("a", "", "", 0, "train", inline_embeddings(true)),
                           manifest_record("a", "", "", 0, "train", inline_embeddings(true))}));
  nlohmann::json wrong_dim = inline_embeddings(true);
  wrong_dim["image"] = {1, 2, 3};
  expect_data_error(lines({manifest_header(), manifest_record("a", "", "", 0, "train", inline_embeddings(true)),
                           manifest_record("b", "", "", 0, "train", wrong_dim)}));
  nlohmann::json dangling = inline_embeddings(true);
  BlobWriter w;
  w.add("x", std::vector<double>{1, 2});
  w.write((dir / "e.bin").string());
  dangling["image"] = blob_ref("e.bin", "missing");
  expect_data_error(lines({manifest_header(), manifest_record("a", "", "", 0, "train", dangling)}));
  expect_data_error(manifest_header().dump() + "\n{not json\n");
}

TEST(Blob, RejectsCorruptFiles) {
  const auto dir = scratch_dir("blob_corrupt");
  write_file(dir / "bad.bin", "KFEMBLOBxxxxxxxx");
  EXPECT_THROW(BlobReader((dir / "bad.bin").string()), DataError);
  write_file(dir / "magic.bin", "nothing here at all");
  EXPECT_THROW(BlobReader((dir / "magic.bin").string()), DataError);
  EXPECT_THROW(BlobReader((dir / "absent.bin").string()), DataError);
  BlobWriter w;
  w.add("k", std::vector<double>{1});
  EXPECT_THROW(w.add("k", std::vector<double>{2}), DataError);
}

TEST(NodeEmbeddings, ReadsHeaderedTable) {
  std::istringstream in("2 3\nislam 1 0 0.5\nmuslim -1 2 3\n");
  const NodeEmbeddingTable t = read_node_embeddings(in);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 3u);
  EXPECT_EQ(t.at("muslim")[2], 3.0);
  EXPECT_FALSE(t.find("religion"));
  EXPECT_THROW(t.at("religion"), DataError);
}

TEST(NodeEmbeddings, Errors) {
  for (const char* text : {"", "x y\n", "2 3\na 1 2 3\na 4 5 6\n", "1 3\na 1 2\n", "1 2\na 1 q\n", "3 2\na 1 2\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(read_node_embeddings(in), DataError) << text;
  }
}

TEST(NodeEmbeddings, Float32RoundTripIsExact) {
  Rng rng(60);
  NodeEmbeddingTable t(4);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(4);
    for (double& x : v) x = static_cast<double>(static_cast<float>(rng.normal() * 1e3));
    t.add("c" + std::to_string(i), v);
  }
  std::stringstream buf;
  write_node_embeddings(buf, t);
  const NodeEmbeddingTable back = read_node_embeddings(buf);
  ASSERT_EQ(back.labels(), t.labels());
  for (const auto& label : t.labels()) {
    const auto a = t.at(label), b = back.at(label);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);
  }
}

}  // namespace
}  // namespace kinfuse
