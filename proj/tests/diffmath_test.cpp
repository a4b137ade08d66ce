// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "kinfuse/autodiff.hpp"
#include "kinfuse/gradcheck.hpp"
#include "kinfuse/parameters.hpp"
#include "test_util.hpp"

namespace kinfuse {
namespace {

using testing::contract;
using testing::random_tensor;

constexpr double kTolerance = 1e-4;
constexpr int kInstances = 20;

TEST(Diffmath, SigmoidOfZeroIsHalf) {
  Tape t;
  EXPECT_DOUBLE_EQ(ad::sigmoid(t.constant(Tensor::scalar(0.0))).value().item(), 0.5);
}

TEST(Diffmath, SoftmaxOfEqualEntriesIsUniform) {
  Tape t;
  const Tensor y = ad::softmax(t.constant(Tensor::row({3.7, 3.7}))).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Diffmath, SquaredNormOfDifference) {
  Tape t;
  const Var d = ad::sub(t.constant(Tensor::row({1, 0})), t.constant(Tensor::row({0, 1})));
  EXPECT_DOUBLE_EQ(ad::sq_l2_norm(d).value().item(), 2.0);
}

TEST(Diffmath, BackwardOfSquare) {
  Tape t;
  const Var w = t.variable(Tensor::scalar(3.0));
  const Var loss = ad::mul(w, w);
  t.backward(loss);
  EXPECT_DOUBLE_EQ(w.grad().item(), 6.0);
}

TEST(Diffmath, BackwardOfSigmoidAtZero) {
  Tape t;
  const Var w = t.variable(Tensor::scalar(0.0));
  t.backward(ad::sigmoid(w));
  EXPECT_DOUBLE_EQ(w.grad().item(), 0.25);
}

TEST(Diffmath, BackwardRejectsNonScalarLoss) {
  Tape t;
  const Var w = t.variable(Tensor::row({1, 2}));
  EXPECT_THROW(t.backward(w), ContractError);
}

TEST(Diffmath, ShapeMismatchIsDimensionError) {
  Tape t;
  const Var a = t.constant(Tensor(2, 3));
  const Var b = t.constant(Tensor(3, 2));
  EXPECT_THROW(ad::add(a, b), DimensionError);
  EXPECT_THROW(ad::mul(a, b), DimensionError);
  EXPECT_THROW(ad::matmul(a, a), DimensionError);
}

TEST(Diffmath, NonFiniteInputIsNumericError) {
  Tape t;
  EXPECT_THROW(t.constant(Tensor::row({1.0, NAN})), NumericError);
  const Var big = t.constant(Tensor::scalar(1e308));
  EXPECT_THROW(ad::scale(big, 10.0), NumericError);
}

TEST(Diffmath, SoftmaxRowsSumToOne) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Tape t;
    const Tensor y = ad::softmax(t.constant(random_tensor(rng, 4, 6, 10.0))).value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) s += y(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Diffmath, BackwardTwiceIsDeterministic) {
  Rng rng(3);
  Tape t;
  const Var x = t.variable(random_tensor(rng, 3, 4));
  const Var w = t.variable(random_tensor(rng, 4, 2));
  const Var loss = ad::sq_l2_norm(ad::tanh(ad::matmul(x, w)));
  t.backward(loss);
  const Tensor gx = x.grad(), gw = w.grad();
  t.backward(loss);
  EXPECT_EQ(gx, x.grad());
  EXPECT_EQ(gw, w.grad());
}

TEST(Diffmath, ParameterGradientsAccumulateAcrossTapes) {
  ParameterStore store;
  Parameter& p = store.add("w", Tensor::scalar(2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    const Var w = t.parameter(p);
    t.backward(ad::mul(w, w));
    t.accumulate_parameter_gradients();
  }
  EXPECT_DOUBLE_EQ(p.grad.item(), 8.0);
  store.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad.item(), 0.0);
}

TEST(Diffmath, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(Tensor::scalar(2.0));
  const Var w = t.variable(Tensor::scalar(1.5));
  t.backward(ad::mul(c, w));
  EXPECT_TRUE(c.grad().empty());
  EXPECT_DOUBLE_EQ(w.grad().item(), 2.0);
}

struct PrimitiveCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  ScalarFn fn;
};

std::vector<PrimitiveCase> primitive_cases() {
  auto one = [](std::size_t r, std::size_t c) {
    return [r, c](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r, c)}; };
  };
  auto two = [](std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2) {
    return [=](Rng& rng) { return std::vector<Tensor>{random_tensor(rng, r1, c1), random_tensor(rng, r2, c2)}; };
  };
  return {
      {"matmul", two(3, 4, 4, 2), [](Tape&, std::span<const Var> v) { return contract(ad::matmul(v[0], v[1]), 1); }},
      {"add", two(3, 4, 3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::add(v[0], v[1]), 2); }},
      {"add_row_bias", two(3, 4, 1, 4),
       [](Tape&, std::span<const Var> v) { return contract(ad::add(v[0], v[1]), 3); }},
      {"sub", two(3, 4, 3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::sub(v[0], v[1]), 4); }},
      {"mul", two(3, 4, 3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::mul(v[0], v[1]), 5); }},
      {"scale", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::scale(v[0], -1.7), 6); }},
      {"concat_cols", two(3, 2, 3, 4),
       [](Tape&, std::span<const Var> v) { return contract(ad::concat_cols({v[0], v[1]}), 7); }},
      {"concat_rows", two(2, 4, 3, 4),
       [](Tape&, std::span<const Var> v) { return contract(ad::concat_rows({v[0], v[1]}), 8); }},
      {"relu", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::relu(v[0]), 9); }},
      {"leaky_relu", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::leaky_relu(v[0]), 10); }},
      {"sigmoid", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::sigmoid(v[0]), 11); }},
      {"tanh", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::tanh(v[0]), 12); }},
      {"softmax", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::softmax(v[0]), 13); }},
      {"mean_rows", one(3, 4), [](Tape&, std::span<const Var> v) { return contract(ad::mean_rows(v[0]), 14); }},
      {"sum", one(3, 4), [](Tape&, std::span<const Var> v) { return ad::sum(ad::mul(v[0], v[0])); }},
      {"sq_l2_norm", one(3, 4), [](Tape&, std::span<const Var> v) { return ad::sq_l2_norm(v[0]); }},
      {"gather_rows", one(4, 3),
       [](Tape&, std::span<const Var> v) { return contract(ad::gather_rows(v[0], {2, 0, 2, 3, 1}), 15); }},
      {"scatter_add_rows", one(5, 3),
       [](Tape&, std::span<const Var> v) { return contract(ad::scatter_add_rows(v[0], {1, 0, 1, 3, 1}, 4), 16); }},
      {"segment_softmax", one(6, 1),
       [](Tape&, std::span<const Var> v) {
         return contract(ad::segment_softmax(v[0], {0, 1, 0, 2, 1, 0}, 3), 17);
       }},
      {"scale_rows", two(4, 3, 4, 1),
       [](Tape&, std::span<const Var> v) { return contract(ad::scale_rows(v[0], v[1]), 18); }},
      {"spmm", one(3, 2),
       [](Tape&, std::span<const Var> v) {
         SparseMatrix s{4, 3, {{0, 1, 0.5}, {1, 0, -1.0}, {3, 2, 2.0}, {3, 1, 0.25}, {0, 1, 1.0}}};
         return contract(ad::spmm(s, v[0]), 19);
       }},
      {"reshape", one(2, 6),
       [](Tape&, std::span<const Var> v) { return contract(ad::reshape(v[0], 3, 4), 20); }},
      {"bce_with_logits", one(1, 1),
       [](Tape&, std::span<const Var> v) { return ad::bce_with_logits(v[0], 1.0); }},
      {"softmax_cross_entropy", one(1, 4),
       [](Tape&, std::span<const Var> v) { return ad::softmax_cross_entropy(v[0], 2); }},
  };
}

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const PrimitiveCase c = primitive_cases()[GetParam()];
  Rng rng(1000 + GetParam());
  for (int i = 0; i < kInstances; ++i) {
    const GradCheckResult r = check_gradients(c.fn, c.inputs(rng));
    EXPECT_LT(r.max_rel_error, kTolerance) << c.name << " instance " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, primitive_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return std::string(primitive_cases()[info.param].name);
                         });

// Random chains of ops over a 3 x 4 working set plus a 4 x 4 mixing matrix.
TEST(Diffmath, RandomCompositionsMatchCentralDifferences) {
  for (int instance = 0; instance < kInstances; ++instance) {
    Rng shape_rng(500 + instance);
    std::vector<int> plan;
    for (int k = 0; k < 6; ++k) plan.push_back(static_cast<int>(shape_rng.index(9)));
    const std::uint64_t pick_seed = shape_rng.next();
    ScalarFn fn = [plan, pick_seed](Tape&, std::span<const Var> v) {
      Rng pick(pick_seed);
      std::vector<Var> pool = {v[0], v[1]};
      for (int op : plan) {
        const Var a = pool[pick.index(pool.size())];
        const Var b = pool[pick.index(pool.size())];
        switch (op) {
          case 0: pool.push_back(ad::matmul(a, v[2])); break;
          case 1: pool.push_back(ad::add(a, b)); break;
          case 2: pool.push_back(ad::mul(a, b)); break;
          case 3: pool.push_back(ad::sigmoid(a)); break;
          case 4: pool.push_back(ad::tanh(a)); break;
          case 5: pool.push_back(ad::softmax(a)); break;
          case 6: pool.push_back(ad::leaky_relu(ad::sub(a, b))); break;
          case 7: pool.push_back(ad::add(a, ad::mean_rows(b))); break;
          default: pool.push_back(ad::scale(ad::relu(a), 0.5)); break;
        }
      }
      return ad::add(contract(pool.back(), 99), ad::scale(ad::sq_l2_norm(pool[pool.size() - 2]), 0.1));
    };
    Rng data_rng(900 + instance);
    std::vector<Tensor> inputs = {random_tensor(data_rng, 3, 4), random_tensor(data_rng, 3, 4),
                                  random_tensor(data_rng, 4, 4, 0.5)};
    const GradCheckResult r = check_gradients(fn, inputs);
    EXPECT_LT(r.max_rel_error, kTolerance) << "composition " << instance;
  }
}

}  // namespace
}  // namespace kinfuse
