// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "kinfuse/relevance.hpp"

namespace kinfuse {
namespace {

TEST(Cosine, Examples) {
  const std::vector<double> z{1, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(z, std::vector<double>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(z, std::vector<double>{0, 1}), 0.0);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(cosine_similarity(z, std::vector<double>{r, r}), 0.7071067811865475, 1e-15);
}

TEST(Cosine, Errors) {
  EXPECT_THROW(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), DimensionError);
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}), NumericError);
}

TEST(Cosine, InvariantToPositiveRescaling) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_vector(rng, 6), b = random_vector(rng, 6);
    auto a2 = a;
    const double c = 0.01 + 10.0 * rng.uniform();
    for (double& v : a2) v *= c;
    EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(a2, b), 1e-12);
  }
}

struct Fixture {
  KnowledgeStore store;
  ConceptId islam, banana, religion;
  Fixture() {
    store.add_edge("islam", "RelatedTo", "religion", 1.0);
    store.add_edge("banana", "IsA", "fruit", 1.0);
    islam = *store.find_entity("islam");
    banana = *store.find_entity("banana");
    religion = *store.find_entity("religion");
  }
};

TEST(ExternalScores, LowerPerplexityRanksFirst) {
  Fixture f;
  std::istringstream in(
      R"({"record_id": "m1", "concept": "islam", "score": 12.3}
{"record_id": "m1", "concept": "banana", "score": 95.0}
)");
  const ExternalScores s = ExternalScores::read(in);
  const ScoredNodes r = s.scores_for("m1", std::vector<ConceptId>{f.banana, f.islam}, f.store);
  ASSERT_EQ(r.nodes.size(), 2u);
  EXPECT_EQ(r.nodes[0].concept_id, f.islam);
  EXPECT_EQ(r.nodes[0].rank, 0u);
  EXPECT_EQ(r.nodes[1].rank, 1u);
  EXPECT_EQ(r.direction, ScoreDirection::lower_is_better);
}

TEST(ExternalScores, MissingNodeNamedInCoverageError) {
  Fixture f;
  std::istringstream in(R"({"record_id": "m1", "concept": "islam", "score": 12.3})");
  const ExternalScores s = ExternalScores::read(in);
  try {
    s.scores_for("m1", std::vector<ConceptId>{f.islam, f.religion}, f.store);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("religion"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("coverage"), std::string::npos);
  }
}

TEST(ExternalScores, EmptyNodeListGivesEmptyResult) {
  Fixture f;
  std::istringstream in("");
  EXPECT_TRUE(ExternalScores::read(in).scores_for("m9", std::vector<ConceptId>{}, f.store).nodes.empty());
}

TEST(ExternalScores, RejectsMalformedLines) {
  std::istringstream bad(R"({"record_id": "m1", "concept": "islam"})");
  EXPECT_THROW(ExternalScores::read(bad), DataError);
  std::istringstream dup(
      R"({"record_id": "m1", "concept": "islam", "score": 1}
{"record_id": "m1", "concept": "islam", "score": 2})");
  EXPECT_THROW(ExternalScores::read(dup), DataError);
}

ScoredNodes scored(std::initializer_list<std::pair<ConceptId, double>> items) {
  ScoredNodes s;
  for (auto [id, v] : items) s.nodes.push_back({id, v, 0});
  rank_nodes(s);
  return s;
}

TEST(TopK, Examples) {
  EXPECT_EQ(top_k(scored({{0, 0.9}, {1, 0.5}, {2, 0.1}}), 2), (std::vector<ConceptId>{0, 1}));
  EXPECT_EQ(top_k(scored({{0, 0.9}, {1, 0.5}, {2, 0.1}}), 10), (std::vector<ConceptId>{0, 1, 2}));
  EXPECT_EQ(top_k(scored({{7, 0.5}, {4, 0.5}}), 1), (std::vector<ConceptId>{4}));
}

TEST(TopK, SeedsBypassPruning) {
  const std::vector<ConceptId> seeds{9};
  EXPECT_EQ(top_k(scored({{0, 0.9}, {1, 0.5}}), 1, seeds), (std::vector<ConceptId>{0, 9}));
}

TEST(TopK, RejectsZeroK) { EXPECT_THROW(top_k(scored({{0, 1.0}}), 0), ConfigError); }

TEST(TopK, RanksArePermutationInScoreOrder) {
  Rng rng(5);
  ScoredNodes s;
  for (ConceptId i = 0; i < 30; ++i) s.nodes.push_back({i, std::round(rng.uniform() * 4.0), 0});
  rank_nodes(s);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) EXPECT_EQ(s.nodes[i].rank, i);
  for (std::size_t i = 1; i < s.nodes.size(); ++i) {
    EXPECT_TRUE(checks::ranks_before(s.nodes[i - 1], s.nodes[i], s.direction));
  }
}

TEST(TopK, MonotoneSeedRetainingAndDominating) {
  const checks::Outcome o = checks::top_k_properties();
  EXPECT_TRUE(o.ok) << o.detail;
}

}  // namespace
}  // namespace kinfuse
