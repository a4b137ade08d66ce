// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "checks.hpp"
#include "kinfuse/fusion.hpp"
#include "kinfuse/gradsuite.hpp"

namespace kinfuse {
namespace {

AlignWeights identity_align(Tape& t, std::size_t d) {
  return {t.constant(Tensor::identity(d)), t.constant(Tensor::identity(d)), {}};
}

TEST(AlignFuse, IdentityProjectionsGiveElementwiseProduct) {
  Tape t;
  const Tensor s = align_fuse(t.constant(Tensor::row({1, 2})), t.constant(Tensor::row({3, 0})), identity_align(t, 2)).value();
  EXPECT_EQ(s, Tensor::row({3, 0}));
}

TEST(AlignFuse, ZeroTextGivesMappingOfZero) {
  Tape t;
  AlignWeights w = identity_align(t, 2);
  w.mapping.push_back({t.constant(Tensor::from_rows({{2, 1}, {0, 5}})), t.constant(Tensor::row({0.5, -1}))});
  const Tensor s = align_fuse(t.constant(Tensor::row({4, 7})), t.constant(Tensor::row({0, 0})), w).value();
  EXPECT_EQ(s, Tensor::row({0.5, -1}));
}

TEST(AlignFuse, RandomCaseAgainstHandMultiplication) {
  Rng rng(8);
  Tape t;
  const Tensor img = random_normal(rng, 1, 4), txt = random_normal(rng, 1, 4);
  const Tensor pi = random_normal(rng, 4, 4), pt = random_normal(rng, 4, 4);
  const Tensor s = align_fuse(t.constant(img), t.constant(txt), {t.constant(pi), t.constant(pt), {}}).value();
  for (std::size_t j = 0; j < 4; ++j) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      a += img[i] * pi(i, j);
      b += txt[i] * pt(i, j);
    }
    EXPECT_NEAR(s[j], a * b, 1e-13);
  }
}

TEST(AlignFuse, RejectsMismatchedEmbeddings) {
  Tape t;
  EXPECT_THROW(align_fuse(t.constant(Tensor::row({1, 2, 3})), t.constant(Tensor::row({1, 2})), identity_align(t, 2)),
               DimensionError);
}

TEST(GatedFusion, ZeroGateWeightAverages) {
  Tape t;
  const Tensor f = fuse_gated(t.constant(Tensor::row({1, 4})), t.constant(Tensor::row({3, -2})),
                              t.constant(Tensor(4, 2))).value();
  EXPECT_EQ(f, Tensor::row({2, 1}));
}

TEST(GatedFusion, EqualInputsAreAFixedPoint) {
  Rng rng(9);
  Tape t;
  const Tensor x = random_normal(rng, 1, 3);
  const Tensor f = fuse_gated(t.constant(x), t.constant(x), t.constant(random_normal(rng, 6, 3))).value();
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(f[i], x[i]);
}

TEST(GatedFusion, HandSetTwoDimCase) {
  // Logits = [x_0, y_1] = [1, -1].
  Tape t;
  const Tensor w = Tensor::from_rows({{1, 0}, {0, 0}, {0, 0}, {0, 1}});
  const Tensor f = fuse_gated(t.constant(Tensor::row({1, 2})), t.constant(Tensor::row({3, -1})), t.constant(w)).value();
  const double g0 = 1.0 / (1.0 + std::exp(-1.0)), g1 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(f[0], g0 * 1 + (1 - g0) * 3, 1e-15);
  EXPECT_NEAR(f[1], g1 * 2 + (1 - g1) * -1, 1e-15);
}

TEST(GatedFusion, SwappedInputsWithNegatedSwappedGate) {
  Rng rng(10);
  for (int k = 0; k < 20; ++k) {
    const std::size_t d = 1 + rng.index(5);
    const Tensor x = random_normal(rng, 1, d), y = random_normal(rng, 1, d), w = random_normal(rng, 2 * d, d);
    Tensor swapped(2 * d, d);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        swapped(r, c) = -w(d + r, c);
        swapped(d + r, c) = -w(r, c);
      }
    }
    Tape t;
    const Tensor a = fuse_gated(t.constant(x), t.constant(y), t.constant(w)).value();
    const Tensor b = fuse_gated(t.constant(y), t.constant(x), t.constant(swapped)).value();
    EXPECT_LT(max_abs_diff(a, b), 1e-14);
  }
}

TEST(GatedFusion, OutputWithinInputRange) {
  const checks::Outcome o = checks::gated_fusion_convexity();
  EXPECT_TRUE(o.ok) << o.detail;
}

TEST(BilinearFusion, DenseIdentityExamples) {
  Tape t;
  const Var eye = t.constant(Tensor::identity(2));
  EXPECT_EQ(fuse_bilinear_dense(t.constant(Tensor::row({1, 0})), t.constant(Tensor::row({0, 1})), eye).value().item(), 0.0);
  EXPECT_EQ(fuse_bilinear_dense(t.constant(Tensor::row({1, 1})), t.constant(Tensor::row({1, 1})), eye).value().item(), 2.0);
}

TEST(BilinearFusion, FactorizedMatchesDenseForms) {
  const checks::Outcome o = checks::bilinear_oracle();
  EXPECT_TRUE(o.ok) << o.detail;
  EXPECT_LE(o.measure, checks::kBilinearOracleTolerance);
}

TEST(HanFusion, SingleLevelIsItsProjection) {
  Rng rng(11);
  Tape t;
  const Tensor eg = random_normal(rng, 1, 2), em = random_normal(rng, 1, 3), w = random_normal(rng, 5, 4);
  const std::vector<Var> levels{t.constant(w)};
  const Tensor f = fuse_han(t.constant(eg), t.constant(em), levels, t.constant(Tensor::row({0.7}))).value();
  const Tensor expected = ad::matmul(ad::concat_cols({t.constant(eg), t.constant(em)}), t.constant(w)).value();
  EXPECT_LT(max_abs_diff(f, expected), 1e-15);
}

TEST(HanFusion, EqualLogitsAndWeights) {
  Rng rng(12);
  Tape t;
  const Tensor eg = random_normal(rng, 1, 2), em = random_normal(rng, 1, 2), w = random_normal(rng, 4, 3);
  const std::vector<Var> levels{t.constant(w), t.constant(w)};
  const Tensor f = fuse_han(t.constant(eg), t.constant(em), levels, t.constant(Tensor::row({0.3, 0.3}))).value();
  const Tensor expected = ad::matmul(ad::concat_cols({t.constant(eg), t.constant(em)}), t.constant(w)).value();
  EXPECT_LT(max_abs_diff(f, expected), 1e-15);
}

TEST(HanFusion, HandSetTwoLevels) {
  // Logits [0, ln 3] give alpha = [1/4, 3/4]. Joint input [1, 2].
  Tape t;
  const std::vector<Var> levels{t.constant(Tensor::from_rows({{1, 0}, {0, 1}})),
                                t.constant(Tensor::from_rows({{0, 2}, {2, 0}}))};
  const Tensor f = fuse_han(t.constant(Tensor::row({1})), t.constant(Tensor::row({2})), levels,
                            t.constant(Tensor::row({0.0, std::log(3.0)}))).value();
  // Level 1: [1, 2]; level 2: [4, 2].
  EXPECT_NEAR(f[0], 0.25 * 1 + 0.75 * 4, 1e-15);
  EXPECT_NEAR(f[1], 0.25 * 2 + 0.75 * 2, 1e-15);
}

TEST(HanFusion, RejectsBadLevels) {
  Tape t;
  const Var x = t.constant(Tensor::row({1}));
  EXPECT_THROW(fuse_han(x, x, std::vector<Var>{}, t.constant(Tensor::row({1}))), ConfigError);
  const std::vector<Var> levels{t.constant(Tensor(2, 2))};
  EXPECT_THROW(fuse_han(x, x, levels, t.constant(Tensor::row({1, 2}))), DimensionError);
}

TEST(MultiplicativeFusion, ZeroWeightGivesZero) {
  Tape t;
  const Tensor f = fuse_multiplicative(t.constant(Tensor::row({1, 2})), t.constant(Tensor::row({3, 4})),
                                       t.constant(Tensor(2, 2))).value();
  EXPECT_EQ(f, Tensor::row({0, 0}));
}

TEST(MultiplicativeFusion, EntriesBoundedByOne) {
  Rng rng(13);
  for (int k = 0; k < 50; ++k) {
    Tape t;
    const Tensor f = fuse_multiplicative(t.constant(random_normal(rng, 1, 4, 10.0)), t.constant(random_normal(rng, 1, 4, 10.0)),
                                         t.constant(random_normal(rng, 4, 4, 10.0))).value();
    for (double v : f.data()) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(MultiplicativeFusion, HandSetTwoDimCase) {
  Tape t;
  const Tensor w = Tensor::from_rows({{1, 0}, {1, 2}});
  const Tensor f = fuse_multiplicative(t.constant(Tensor::row({0.5, -1})), t.constant(Tensor::row({1, 0.25})),
                                       t.constant(w)).value();
  // E_g W = [-0.5, -2]; E_m W = [1.25, 0.5].
  EXPECT_NEAR(f[0], std::tanh(-0.5) * std::tanh(1.25), 1e-15);
  EXPECT_NEAR(f[1], std::tanh(-2.0) * std::tanh(0.5), 1e-15);
  EXPECT_THROW(fuse_multiplicative(t.constant(Tensor::row({1})), t.constant(Tensor::row({1, 2})), t.constant(w)),
               DimensionError);
}

TEST(FusionModule, OutputDims) {
  Rng rng(14);
  for (FusionKind kind : {FusionKind::gated, FusionKind::bilinear, FusionKind::han, FusionKind::multiplicative}) {
    for (BilinearMode mode : {BilinearMode::factorized, BilinearMode::dense}) {
      FusionConfig c;
      c.kind = kind;
      c.bilinear_mode = mode;
      c.graph_dim = 3;
      c.distilled_dim = 5;
      c.dim = 4;
      FusionModule m(c);
      ParameterStore p;
      m.init(p, rng);
      Tape t;
      const Var out = m.apply(t, p, t.constant(random_normal(rng, 1, 3)), t.constant(random_normal(rng, 1, 5)));
      EXPECT_EQ(out.cols(), c.output_dim());
      EXPECT_EQ(out.rows(), 1u);
    }
  }
}

TEST(FusionModule, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(15);
  for (FusionKind kind : {FusionKind::gated, FusionKind::bilinear, FusionKind::han, FusionKind::multiplicative}) {
    FusionConfig c;
    c.kind = kind;
    c.graph_dim = 3;
    c.distilled_dim = 2;
    c.dim = 3;
    FusionModule m(c);
    ParameterStore p;
    m.init(p, rng);
    const Tensor g = random_normal(rng, 1, 3), d = random_normal(rng, 1, 2), r = random_normal(rng, 1, 3);
    const GradCheckResult res = check_parameter_gradients(p, [&](Tape& t) {
      return ad::sum(ad::mul(m.apply(t, p, t.constant(g), t.constant(d)), t.constant(r)));
    });
    EXPECT_LT(res.max_rel_error, kGradTolerance) << enum_to_string(kind);
  }
}

}  // namespace
}  // namespace kinfuse
