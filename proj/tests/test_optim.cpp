// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hera/nn.hpp"
#include "hera/optim.hpp"

using namespace hera;

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter w("w", Tensor::vector(std::vector<double>{0.5, -1.5}));
  std::vector<Parameter*> ps{&w};
  adam_step(ps, AdamConfig{});
  EXPECT_EQ(w.value.data, (std::vector<double>{0.5, -1.5}));
  EXPECT_EQ(w.step_count, 1u);
}

// t = 1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2,
// update = lr * g / (|g| + eps).
TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter w("w", Tensor::scalar(0.0));
  w.grad.data[0] = 1.0;
  std::vector<Parameter*> ps{&w};
  adam_step(ps, AdamConfig{1e-3});
  EXPECT_NEAR(w.value.data[0], -1e-3 * 1.0 / (1.0 + 1e-8), 1e-18);
  EXPECT_EQ(w.grad.data[0], 0.0);
}

// Independent scalar simulation of the recurrence on (w - 3)^2.
TEST(Adam, QuadraticMatchesScalarRecurrenceAndApproaches) {
  Parameter w("w", Tensor::scalar(0.0));
  std::vector<Parameter*> ps{&w};
  const AdamConfig cfg{0.1};
  double x = 0.0, m = 0.0, v = 0.0;
  double prev = 3.0;
  for (int t = 1; t <= 20; ++t) {
    Graph g;
    Var d = g.add_scalar(g.param(w), -3.0);
    g.backward(g.sum(g.hadamard(d, d)));
    adam_step(ps, cfg);

    const double grad = 2.0 * (x - 3.0);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(w.value.data[0], x, 1e-12);
    EXPECT_LT(std::abs(w.value.data[0] - 3.0), prev);
    prev = std::abs(w.value.data[0] - 3.0);
  }
}

TEST(Adam, NonFiniteGradientAbortsBeforeAnyUpdate) {
  Parameter a("a", Tensor::scalar(1.0));
  Parameter b("b", Tensor::scalar(1.0));
  a.grad.data[0] = 1.0;
  b.grad.data[0] = std::nan("");
  std::vector<Parameter*> ps{&a, &b};
  try {
    adam_step(ps, AdamConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(a.value.data[0], 1.0);
  EXPECT_EQ(a.step_count, 0u);
}

TEST(Adam, DeterministicGivenState) {
  auto run = [] {
    Parameter w("w", Tensor::vector(std::vector<double>{0.1, 0.2, 0.3}));
    std::vector<Parameter*> ps{&w};
    for (int t = 0; t < 5; ++t) {
      for (std::size_t i = 0; i < 3; ++i) w.grad.data[i] = std::sin(t + static_cast<double>(i));
      adam_step(ps, AdamConfig{});
    }
    return w.value.data;
  };
  EXPECT_EQ(run(), run());
}

TEST(Init, SameSeedGivesIdenticalTensors) {
  const ShapeSpec spec{"w", 5, 7, 7};
  EXPECT_EQ(init_params(spec, 7).value, init_params(spec, 7).value);
  EXPECT_NE(init_params(spec, 7).value, init_params(spec, 8).value);
}

TEST(Init, EntriesInsideFanInBound) {
  const Parameter p = init_params({"w", 32, 16, 16}, 3);
  for (double x : p.value.data) {
    EXPECT_GE(x, -0.25);
    EXPECT_LE(x, 0.25);
  }
}

// Uniform(-b, b) has sd b / sqrt(3); the mean of n draws has sd b / sqrt(3n).
TEST(Init, SampleMeanWithinThreeSigma) {
  const Parameter p = init_params({"w", 100, 100, 16}, 9);
  double sum = 0.0;
  for (double x : p.value.data) sum += x;
  const double n = static_cast<double>(p.value.size());
  EXPECT_LT(std::abs(sum / n), 3.0 * 0.25 / std::sqrt(3.0 * n));
}

TEST(Init, ZeroDimensionRejected) {
  EXPECT_THROW(init_params({"w", 0, 3, 3}, 1), ContractError);
  EXPECT_THROW(init_params({"w", 3, 0, 3}, 1), ContractError);
}

TEST(GradCheck, MseHeadPasses) {
  MlpHead head("head", 4, 6, 3, 17);
  const std::vector<double> h{0.3, -0.2, 0.9, 0.1};
  auto f = [&](Graph& g) {
    HeadOutput out = head.forward(g, g.constant(h));
    return g.add(nll_loss(g, out.logits, 1), mse_loss(g, out.duration, 0.4));
  };
  auto params = head.parameters();
  const GradCheckReport r = grad_check(f, params, 1e-5, 1e-4);
  EXPECT_TRUE(r.pass) << r.worst()->name << " " << r.worst()->max_rel_error;
}

TEST(GradCheck, ConstantFunctionPasses) {
  Parameter w("w", Tensor::scalar(2.0));
  std::vector<Parameter*> ps{&w};
  const auto r = grad_check([](Graph& g) { return g.scalar(5.0); }, ps, 1e-5, 1e-4);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.entries[0].max_abs_error, 0.0);
}

// Corrupting the tanh rule must flag exactly the parameter behind tanh.
TEST(GradCheck, CorruptedBackwardRuleIsCaught) {
  Parameter a("behind_tanh", Tensor::vector(std::vector<double>{0.2, -0.4}));
  Parameter b("behind_sigmoid", Tensor::vector(std::vector<double>{0.5, 0.1}));
  std::vector<Parameter*> ps{&a, &b};
  auto f = [&](Graph& g) { return g.add(g.sum(g.tanh(g.param(a))), g.sum(g.sigmoid(g.param(b)))); };
  const auto r = grad_check(f, ps, 1e-5, 1e-4, [](Graph& g) { g.inject_backward_fault(Op::Tanh, 1.5); });
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.entries[0].pass);
  EXPECT_TRUE(r.entries[1].pass);
  EXPECT_EQ(r.worst()->name, "behind_tanh");
}

TEST(GradCheck, NonFiniteLossNamesParameter) {
  Parameter w("w_log", Tensor::scalar(700.0));
  std::vector<Parameter*> ps{&w};
  auto f = [&](Graph& g) { Var e = g.exp(g.param(w)); return g.sum(g.hadamard(e, e)); };
  try {
    grad_check(f, ps, 1e-5, 1e-4);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("w_log"), std::string::npos);
  }
}

TEST(GradCheck, RejectsNonPositiveSettings) {
  std::vector<Parameter*> none;
  EXPECT_THROW(grad_check([](Graph& g) { return g.scalar(0); }, none, 0.0, 1e-4), ContractError);
  EXPECT_THROW(grad_check([](Graph& g) { return g.scalar(0); }, none, 1e-5, -1.0), ContractError);
}

TEST(Seeds, MixSeedSeparatesSalts) {
  EXPECT_NE(mix_seed(0, 1), mix_seed(0, 2));
  EXPECT_EQ(mix_seed(42, 7), mix_seed(42, 7));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = unit_uniform(rng);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
