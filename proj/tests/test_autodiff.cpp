/*
 * Copyright 2026 The tgnsvdd Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "tgnsvdd/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tgnsvdd/optim.hpp"

namespace tgnsvdd::ad {
namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Tensor random_parameter(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  return Tensor::parameter(s, random_values(s.size(), seed, lo, hi));
}

TEST(TensorOpsTest, Concat) {
  Graph g;
  Tensor c = g.concat({Tensor::row({1, 2}), Tensor::row({3})});
  ASSERT_EQ(c.shape(), (Shape{1, 3}));
  EXPECT_EQ(std::vector<double>(c.value().begin(), c.value().end()), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(g.size(), 0u);  // nothing needs grad, nothing recorded
}

TEST(TensorOpsTest, SquaredNorm) {
  Graph g;
  EXPECT_DOUBLE_EQ(g.squared_l2_norm(Tensor::row({3, 4})).item(), 25.0);
}

TEST(TensorOpsTest, SoftmaxOfEqualRow) {
  Graph g;
  Tensor s = g.softmax_rows(Tensor::row({0, 0, 0}));
  for (double v : s.value()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(TensorOpsTest, SoftmaxLargeLogitsStayFinite) {
  Graph g;
  Tensor s = g.softmax_rows(Tensor::row({1000.0, -1e30, 999.0}));
  EXPECT_NEAR(s.at(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(s.at(0, 1), 0.0);
}

TEST(TensorOpsTest, MatmulValues) {
  Graph g;
  Tensor a = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::constant({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = g.matmul(a, b);
  EXPECT_EQ(std::vector<double>(c.value().begin(), c.value().end()), (std::vector<double>{58, 64, 139, 154}));
}

TEST(TensorOpsTest, ShapeErrorsNameTheOp) {
  Graph g;
  try {
    g.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
  EXPECT_THROW(g.add(Tensor::zeros({1, 2}), Tensor::zeros({1, 3})), Error);
  EXPECT_THROW(Tensor::constant({2, 2}, {1, 2, 3}), Error);
}

TEST(BackwardTest, SumGivesOnes) {
  Tensor x = Tensor::parameter({1, 3}, {0.3, -2.0, 5.0});
  Graph g;
  g.backward(g.sum(x));
  for (double v : x.grad()) EXPECT_EQ(v, 1.0);
}

TEST(BackwardTest, ZeroAtMinimum) {
  Tensor x = Tensor::parameter({1, 4}, {1, 2, 3, 4});
  Tensor c = Tensor::row({1, 2, 3, 4});
  Graph g;
  g.backward(g.squared_l2_norm(g.sub(x, c)));
  for (double v : x.grad()) EXPECT_EQ(v, 0.0);
}

TEST(BackwardTest, RejectsNonScalarLoss) {
  Tensor x = Tensor::parameter({1, 2}, {1, 2});
  Graph g;
  EXPECT_THROW(g.backward(g.scale(x, 2.0)), Error);
}

TEST(BackwardTest, SharedInputAccumulates) {
  // d/dx (x*x + x) = 2x + 1
  Tensor x = Tensor::parameter({1, 1}, {1.5});
  Graph g;
  g.backward(g.sum(g.add(g.mul(x, x), x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(BackwardTest, TwoLayerTanhMatchesFiniteDifferences) {
  // 3 -> 3 -> 1 network: 9 + 3 + 3 + 1 + 4 (input as parameter) = 20 parameters.
  Tensor w1 = random_parameter({3, 3}, 1);
  Tensor b1 = random_parameter({1, 3}, 2);
  Tensor w2 = random_parameter({3, 1}, 3);
  Tensor b2 = random_parameter({1, 1}, 4);
  Tensor x = Tensor::constant({2, 3}, random_values(6, 5));
  Tensor y = Tensor::constant({2, 1}, {0.25, -0.5});
  std::vector<Parameter> params{{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
  auto loss = [&](Graph& g) {
    Tensor h = g.tanh(g.linear(x, w1, b1));
    Tensor out = g.tanh(g.linear(h, w2, b2));
    return g.mean(g.mul(g.sub(out, y), g.sub(out, y)));
  };
  EXPECT_LT(grad_check(loss, params, 1e-5), 1e-6);
}

// Each op on its own, differentiated through a random projection so that
// every output entry carries a distinct upstream gradient.
struct OpCase {
  const char* name;
  std::vector<Shape> inputs;
  std::function<Tensor(Graph&, const std::vector<Tensor>&)> op;
};

class OpGradientTest : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradientTest, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  std::vector<Parameter> params;
  std::vector<Tensor> ins;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    ins.push_back(random_parameter(c.inputs[k], 100 + k, -1.5, 1.5));
    params.push_back({"in" + std::to_string(k), ins.back()});
  }
  Tensor probe;
  auto loss = [&](Graph& g) {
    Tensor out = c.op(g, ins);
    if (!probe.defined() || probe.shape() != out.shape()) {
      probe = Tensor::constant(out.shape(), random_values(out.size(), 7));
    }
    return g.sum(g.mul(out, probe));
  };
  EXPECT_LT(grad_check(loss, params, 1e-6), 1e-6) << c.name;
}

std::string op_name(const ::testing::TestParamInfo<OpCase>& info) { return info.param.name; }

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradientTest,
    ::testing::Values(
        OpCase{"matmul", {{2, 3}, {3, 4}}, [](Graph& g, const auto& x) { return g.matmul(x[0], x[1]); }},
        OpCase{"add", {{2, 3}, {2, 3}}, [](Graph& g, const auto& x) { return g.add(x[0], x[1]); }},
        OpCase{"sub", {{2, 3}, {2, 3}}, [](Graph& g, const auto& x) { return g.sub(x[0], x[1]); }},
        OpCase{"mul", {{2, 3}, {2, 3}}, [](Graph& g, const auto& x) { return g.mul(x[0], x[1]); }},
        OpCase{"add_row", {{3, 2}, {1, 2}}, [](Graph& g, const auto& x) { return g.add_row(x[0], x[1]); }},
        OpCase{"mul_col", {{3, 2}, {3, 1}}, [](Graph& g, const auto& x) { return g.mul_col(x[0], x[1]); }},
        OpCase{"scale", {{2, 2}}, [](Graph& g, const auto& x) { return g.scale(x[0], -2.5); }},
        OpCase{"rsub", {{2, 2}}, [](Graph& g, const auto& x) { return g.rsub(1.0, x[0]); }},
        OpCase{"concat", {{2, 1}, {2, 3}}, [](Graph& g, const auto& x) { return g.concat({x[0], x[1], x[0]}); }},
        OpCase{"concat_rows", {{1, 3}, {2, 3}}, [](Graph& g, const auto& x) { return g.concat_rows({x[0], x[1]}); }},
        OpCase{"slice_cols", {{2, 5}}, [](Graph& g, const auto& x) { return g.slice_cols(x[0], 1, 4); }},
        OpCase{"gather_rows", {{3, 2}}, [](Graph& g, const auto& x) { return g.gather_rows(x[0], {2, 0, 2, 1}); }},
        OpCase{"repeat_rows", {{2, 2}}, [](Graph& g, const auto& x) { return g.repeat_rows(x[0], 3); }},
        OpCase{"reshape", {{2, 3}}, [](Graph& g, const auto& x) { return g.reshape(x[0], {3, 2}); }},
        OpCase{"row_sum", {{3, 4}}, [](Graph& g, const auto& x) { return g.row_sum(x[0]); }},
        OpCase{"group_sum_rows", {{6, 2}}, [](Graph& g, const auto& x) { return g.group_sum_rows(x[0], 3); }},
        OpCase{"tanh", {{2, 3}}, [](Graph& g, const auto& x) { return g.tanh(x[0]); }},
        OpCase{"sigmoid", {{2, 3}}, [](Graph& g, const auto& x) { return g.sigmoid(x[0]); }},
        OpCase{"cos", {{2, 3}}, [](Graph& g, const auto& x) { return g.cos(x[0]); }},
        OpCase{"softplus", {{2, 3}}, [](Graph& g, const auto& x) { return g.softplus(x[0]); }},
        OpCase{"softmax_rows", {{3, 4}}, [](Graph& g, const auto& x) { return g.softmax_rows(x[0]); }},
        OpCase{"mean", {{3, 4}}, [](Graph& g, const auto& x) { return g.mean(x[0]); }},
        OpCase{"squared_l2_norm", {{2, 3}}, [](Graph& g, const auto& x) { return g.squared_l2_norm(x[0]); }},
        OpCase{"row_squared_norm", {{3, 2}}, [](Graph& g, const auto& x) { return g.row_squared_norm(x[0]); }}),
    op_name);

TEST(BackwardTest, ReluGradientAwayFromKink) {
  Tensor x = Tensor::parameter({1, 4}, {-2.0, -0.5, 0.5, 3.0});
  Graph g;
  g.backward(g.sum(g.relu(x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 0, 1, 1}));
}

TEST(GradCheckTest, Square) {
  Tensor x = Tensor::parameter({1, 1}, {3.0});
  std::vector<Parameter> params{{"x", x}};
  auto loss = [&](Graph& g) { return g.sum(g.mul(x, x)); };
  EXPECT_LT(grad_check(loss, params, 1e-5), 1e-8);
  EXPECT_DOUBLE_EQ(x.value()[0], 3.0);  // restored after perturbation
}

TEST(GradCheckTest, CatchesWrongBackwardRule) {
  Tensor x = Tensor::parameter({1, 3}, {0.3, 1.1, -0.7});
  std::vector<Parameter> params{{"x", x}};
  auto loss = [&](Graph& g) {
    // exp with the derivative of sin, deliberately wrong
    Tensor y = g.elementwise(x, [](double v) { return std::exp(v); }, [](double v, double) { return std::cos(v); });
    return g.sum(y);
  };
  EXPECT_GT(grad_check(loss, params, 1e-5), 1e-2);
}

}  // namespace
}  // namespace tgnsvdd::ad
