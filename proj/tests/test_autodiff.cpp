// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hera/autodiff.hpp"
#include "hera/optim.hpp"

using namespace hera;

namespace {

std::vector<double> values(const Graph& g, Var v) {
  auto s = g.value(v);
  return {s.begin(), s.end()};
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * unit_uniform(rng) - 1.0;
  return v;
}

// Scalar probe: sum(c ⊙ f(inputs)) so every output component contributes.
using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

struct PrimitiveCase {
  const char* name;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  Builder build;
};

double probe(const PrimitiveCase& c, std::vector<Tensor>& inputs, const std::vector<double>& weights,
             std::vector<std::vector<double>>* grads) {
  Graph g;
  std::vector<Parameter> params;
  params.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) params.emplace_back("x" + std::to_string(i), inputs[i]);
  std::vector<Var> vars;
  for (auto& p : params) vars.push_back(g.param(p));
  Var out = c.build(g, vars);
  Var root = g.sum(g.hadamard(out, g.constant(weights, g.rows(out), g.cols(out))));
  if (grads) {
    g.backward(root);
    grads->clear();
    for (auto& p : params) grads->push_back(p.grad.data);
  }
  return g.scalar_value(root);
}

}  // namespace

TEST(Graph, MatvecIdentityIsIdentity) {
  Graph g;
  const std::vector<double> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Var m = g.constant(eye, 3, 3);
  Var x = g.constant(std::vector<double>{1, 2, 3});
  EXPECT_EQ(values(g, g.matvec(m, x)), (std::vector<double>{1, 2, 3}));
}

TEST(Graph, SigmoidOfZeroIsHalf) {
  Graph g;
  EXPECT_DOUBLE_EQ(g.scalar_value(g.sigmoid(g.scalar(0.0))), 0.5);
}

TEST(Graph, LogSoftmaxOfEqualLogits) {
  Graph g;
  auto v = values(g, g.log_softmax(g.constant(std::vector<double>{0.0, 0.0})));
  EXPECT_DOUBLE_EQ(v[0], -std::log(2.0));
  EXPECT_DOUBLE_EQ(v[1], -std::log(2.0));
}

TEST(Graph, LogSoftmaxIsStableForLargeLogits) {
  Graph g;
  auto v = values(g, g.log_softmax(g.constant(std::vector<double>{1000.0, 0.0})));
  EXPECT_TRUE(std::isfinite(v[1]));
  EXPECT_NEAR(v[0], 0.0, 1e-12);
  EXPECT_NEAR(v[1], -1000.0, 1e-9);
}

TEST(Graph, ShapeMismatchNamesPrimitiveAndShapes) {
  Graph g;
  Var a = g.zeros(3);
  Var b = g.zeros(2);
  try {
    g.add(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("add"), std::string::npos);
    EXPECT_NE(what.find("3x1"), std::string::npos);
    EXPECT_NE(what.find("2x1"), std::string::npos);
  }
  EXPECT_THROW(g.matvec(g.filled(2, 3, 1.0), g.zeros(2)), DimensionError);
  EXPECT_THROW(g.slice(a, 2, 2), DimensionError);
  EXPECT_THROW(g.log_softmax(g.filled(2, 2, 0.0)), DimensionError);
}

TEST(Graph, ApplyDispatchesAndChecksArity) {
  Graph g;
  Var a = g.constant(std::vector<double>{1, 2});
  Var b = g.constant(std::vector<double>{3, 4});
  std::vector<Var> two{a, b};
  EXPECT_EQ(values(g, g.apply(Op::Add, two)), (std::vector<double>{4, 6}));
  std::vector<Var> one{a};
  EXPECT_THROW(g.apply(Op::Add, one), DimensionError);
  EXPECT_THROW(g.apply(Op::Slice, one), ContractError);
}

TEST(Backward, SquareGivesTwiceW) {
  Parameter w("w", Tensor::vector(std::vector<double>{1.0, 2.0}));
  Graph g;
  Var v = g.param(w);
  g.backward(g.sum(g.hadamard(v, v)));
  EXPECT_EQ(w.grad.data, (std::vector<double>{2.0, 4.0}));
}

TEST(Backward, SigmoidSlopeAtZero) {
  Parameter x("x", Tensor::scalar(0.0));
  Graph g;
  g.backward(g.sigmoid(g.param(x)));
  EXPECT_DOUBLE_EQ(x.grad.data[0], 0.25);
}

TEST(Backward, RootMustBeScalar) {
  Graph g;
  EXPECT_THROW(g.backward(g.zeros(2)), ContractError);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Parameter w("w", Tensor::scalar(3.0));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(g.scale(g.param(w), 2.0));
  }
  EXPECT_DOUBLE_EQ(w.grad.data[0], 4.0);
}

TEST(Backward, FrozenParameterKeepsZeroGrad) {
  Parameter w("w", Tensor::scalar(3.0));
  w.frozen = true;
  Graph g;
  g.backward(g.scale(g.param(w), 2.0));
  EXPECT_DOUBLE_EQ(w.grad.data[0], 0.0);
}

// Linearity: backward through sum(f1, f2) equals backward(f1) + backward(f2).
TEST(Backward, SumOfSubgraphsIsSumOfBackwards) {
  std::mt19937_64 rng(11);
  Parameter w("w", Tensor::vector(random_vector(rng, 4)));
  auto f1 = [&](Graph& g) { return g.sum(g.tanh(g.param(w))); };
  auto f2 = [&](Graph& g) { Var v = g.param(w); return g.sum(g.hadamard(g.exp(v), v)); };
  std::vector<double> separate(4, 0.0);
  for (auto f : {std::function<Var(Graph&)>(f1), std::function<Var(Graph&)>(f2)}) {
    w.zero_grad();
    Graph g;
    g.backward(f(g));
    for (std::size_t i = 0; i < 4; ++i) separate[i] += w.grad.data[i];
  }
  w.zero_grad();
  Graph g;
  std::vector<Var> parts{f1(g), f2(g)};
  g.backward(g.sum(g.concat(parts)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.grad.data[i], separate[i], 1e-14);
}

// Each primitive against central differences, 100 random trials each.
TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
  const std::vector<PrimitiveCase> cases = {
      {"matvec", {{3, 4}, {4, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.matvec(x[0], x[1]); }},
      {"add", {{3, 1}, {3, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.add(x[0], x[1]); }},
      {"hadamard", {{3, 1}, {3, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.hadamard(x[0], x[1]); }},
      {"sigmoid", {{4, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.sigmoid(x[0]); }},
      {"tanh", {{4, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.tanh(x[0]); }},
      {"exp", {{4, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.exp(x[0]); }},
      {"neg", {{4, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.neg(x[0]); }},
      {"sum", {{2, 3}}, [](Graph& g, const std::vector<Var>& x) { return g.sum(x[0]); }},
      {"log_softmax", {{5, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.log_softmax(x[0]); }},
      {"slice", {{6, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.slice(x[0], 2, 3); }},
      {"concat", {{2, 1}, {3, 1}}, [](Graph& g, const std::vector<Var>& x) { return g.concat({x[0], x[1]}); }},
  };
  std::mt19937_64 rng(5);
  const double eps = 1e-6;
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (auto [r, k] : c.shapes) {
        Tensor t(r, k);
        t.data = random_vector(rng, r * k);
        inputs.push_back(t);
      }
      std::vector<double> weights;
      {
        Graph g;
        std::vector<Var> vars;
        for (auto& t : inputs) vars.push_back(g.constant(t));
        Var out = c.build(g, vars);
        weights = random_vector(rng, g.rows(out) * g.cols(out));
      }
      std::vector<std::vector<double>> analytic;
      probe(c, inputs, weights, &analytic);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
          const double saved = inputs[i].data[j];
          inputs[i].data[j] = saved + eps;
          const double up = probe(c, inputs, weights, nullptr);
          inputs[i].data[j] = saved - eps;
          const double down = probe(c, inputs, weights, nullptr);
          inputs[i].data[j] = saved;
          const double numeric = (up - down) / (2 * eps);
          const double a = analytic[i][j];
          worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3}));
        }
      }
    }
    EXPECT_LE(worst, 1e-6) << c.name;
  }
}

// A shared node feeding two consumers receives both contributions.
TEST(Backward, SharedSubgraphAccumulates) {
  Parameter w("w", Tensor::scalar(0.7));
  Graph g;
  Var v = g.param(w);
  Var t = g.tanh(v);
  g.backward(g.sum(g.concat({t, g.hadamard(t, t)})));
  const double th = std::tanh(0.7);
  const double dt = 1.0 - th * th;
  EXPECT_NEAR(w.grad.data[0], dt + 2 * th * dt, 1e-14);
}

TEST(Backward, FaultInjectionScalesOnePrimitive) {
  Parameter w("w", Tensor::scalar(0.3));
  Graph g;
  g.inject_backward_fault(Op::Tanh, 2.0);
  g.backward(g.tanh(g.param(w)));
  const double th = std::tanh(0.3);
  EXPECT_NEAR(w.grad.data[0], 2.0 * (1.0 - th * th), 1e-14);
}
