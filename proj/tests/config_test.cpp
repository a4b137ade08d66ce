// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "kinfuse/config.hpp"
#include "kinfuse/parallel.hpp"
#include "test_util.hpp"

namespace kinfuse {
namespace {

TEST(RunConfig, DefaultsAndSeedRequired) {
  const RunConfig c;
  EXPECT_FALSE(c.seed());
  EXPECT_THROW(c.required_seed(), ConfigError);
  EXPECT_EQ(c.at("graph.k").get<int>(), 750);
  EXPECT_EQ(c.workers(), 1u);
}

TEST(RunConfig, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(RunConfig::from_json({{"grpah", {{"k", 3}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"graph", {{"kk", 3}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"graph", {{"k", "many"}}}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"seed", -1}}), ConfigError);
  EXPECT_THROW(RunConfig::from_json({{"graph", 3}}), ConfigError);
  EXPECT_EQ(RunConfig::from_json({{"seed", 9}}).required_seed(), 9u);
}

TEST(RunConfig, Overrides) {
  RunConfig c;
  c.apply_override("graph.k=25");
  c.apply_override("model.fusion.kind=han");
  c.apply_override("loss.lambda_kd=0");
  c.apply_override("seed=3");
  EXPECT_EQ(c.at("graph.k").get<int>(), 25);
  EXPECT_EQ(c.at("model.fusion.kind").get<std::string>(), "han");
  EXPECT_EQ(c.at("loss.lambda_kd").get<double>(), 0.0);
  EXPECT_EQ(c.required_seed(), 3u);
  EXPECT_THROW(c.apply_override("graph.kay=3"), ConfigError);
  EXPECT_THROW(c.apply_override("no_equals"), ConfigError);
  EXPECT_THROW(c.apply_override("graph..k=3"), ConfigError);
  EXPECT_THROW(c.apply_override("workers=0"); c.workers(), ConfigError);
}

TEST(RunConfig, RelativePathsResolveAgainstConfigFile) {
  const auto dir = testing::scratch_dir("config_paths");
  testing::write_file(dir / "run.json", R"({"seed": 1, "paths": {"kg": "kg.tsv", "store": "/abs/s.bin"}})");
  const RunConfig c = RunConfig::load((dir / "run.json").string());
  EXPECT_EQ(c.path("kg"), (dir / "kg.tsv").string());
  EXPECT_EQ(c.path("store"), "/abs/s.bin");
  EXPECT_EQ(c.path("graphs"), "");
  EXPECT_THROW(c.required_path("graphs"), ConfigError);
  testing::write_file(dir / "bad.json", "{seed: 1");
  EXPECT_THROW(RunConfig::load((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(RunConfig::load((dir / "absent.json").string()), ConfigError);
}

TEST(RunConfig, TypedSectionsValidate) {
  RunConfig c;
  c.apply_override("train.epochs=0");
  EXPECT_THROW(c.train_config(), ConfigError);
  RunConfig k;
  k.apply_override("graph.k=0");
  EXPECT_THROW(k.graph_options(), ConfigError);
  RunConfig d;
  d.apply_override("model.gnn.arch=transformer");
  EXPECT_THROW(d.model_config({2, 3, 2, 2}, 2, 4), ConfigError);
}

TEST(ParallelMap, PreservesIndexOrder) {
  for (std::size_t workers : {1u, 2u, 4u, 16u}) {
    const auto out = parallel_map(100, workers, [](std::size_t i) { return static_cast<int>(i * i); });
    ASSERT_EQ(out.size(), 100u);
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
  }
  EXPECT_TRUE(parallel_map(0, 4, [](std::size_t) { return 1; }).empty());
}

TEST(ParallelMap, RethrowsSmallestFailingIndex) {
  for (std::size_t workers : {1u, 3u}) {
    try {
      parallel_map(50, workers, [](std::size_t i) -> int {
        if (i == 17 || i == 40) throw std::runtime_error("bad " + std::to_string(i));
        return 0;
      });
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "bad 17");
    }
  }
}

}  // namespace
}  // namespace kinfuse
