// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hera/nn.hpp"

using namespace hera;

namespace {

void zero_all(std::vector<Parameter*> ps) {
  for (Parameter* p : ps) p->value.fill(0.0);
}

std::vector<double> eval(const GruCell& cell, const std::vector<double>& x, const std::vector<double>& h) {
  Graph g;
  auto v = g.value(cell.step(g, g.constant(x), g.constant(h)));
  return {v.begin(), v.end()};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Gru, ZeroParametersHalveTheState) {
  GruCell cell("gru", 3, 4, 1);
  zero_all(cell.parameters());
  const std::vector<double> h{0.4, -0.8, 1.0, 0.2};
  const auto out = eval(cell, {1.0, 2.0, 3.0}, h);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
  const auto zero = eval(cell, {1.0, 2.0, 3.0}, {0, 0, 0, 0});
  for (double v : zero) EXPECT_EQ(v, 0.0);
}

// Scalar loop re-implementation of the gate formulas.
TEST(Gru, MatchesScalarReimplementation) {
  GruCell cell("gru", 3, 5, 42);
  std::mt19937_64 rng(3);
  std::vector<double> x(3), h(5);
  for (double& v : x) v = 2 * unit_uniform(rng) - 1;
  for (double& v : h) v = 2 * unit_uniform(rng) - 1;
  auto affine = [&](const Parameter& W, const std::vector<double>& in, std::size_t r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) acc += W.value(r, c) * in[c];
    return acc;
  };
  const auto out = eval(cell, x, h);
  for (std::size_t i = 0; i < 5; ++i) {
    const double r = sig(affine(cell.W_r, x, i) + affine(cell.U_r, h, i) + cell.b_r.value.data[i]);
    const double z = sig(affine(cell.W_z, x, i) + affine(cell.U_z, h, i) + cell.b_z.value.data[i]);
    const double n = std::tanh(affine(cell.W_n, x, i) + r * affine(cell.U_n, h, i) + cell.b_n.value.data[i]);
    EXPECT_NEAR(out[i], (1 - z) * h[i] + z * n, 1e-14);
  }
}

TEST(Gru, WrongInputWidthIsDimensionError) {
  GruCell cell("gru", 3, 4, 1);
  Graph g;
  EXPECT_THROW(cell.step(g, g.zeros(2), g.zeros(4)), DimensionError);
  EXPECT_THROW(cell.step(g, g.zeros(3), g.zeros(5)), DimensionError);
}

TEST(Embedding, DurationBinBoundaries) {
  EXPECT_EQ(duration_bin(0.0), 0u);
  EXPECT_EQ(duration_bin(1.0), 99u);
  EXPECT_EQ(duration_bin(0.375), 37u);
  EXPECT_EQ(duration_bin(0.29), 29u);
  EXPECT_THROW(duration_bin(1.5), ContractError);
  EXPECT_THROW(duration_bin(-0.1), ContractError);
}

TEST(Embedding, SameInputSameVector) {
  EmbeddingTable labels("l", 5, 4, 1), durations("d", kDurationBins, 4, 2);
  Graph g;
  auto a = g.value(embed_inputs(g, 3, 0.42, labels, durations));
  auto b = g.value(embed_inputs(g, 3, 0.42, labels, durations));
  ASSERT_EQ(a.size(), 8u);
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i], labels.matrix.value(3, i));
    EXPECT_EQ(a[4 + i], durations.matrix.value(42, i));
  }
}

TEST(Embedding, UnknownIdIsVocabularyError) {
  EmbeddingTable labels("l", 5, 4, 1);
  Graph g;
  EXPECT_THROW(labels.lookup(g, 5), VocabularyError);
}

TEST(Head, ZeroWeightsGiveUniformLogitsAndHalfDuration) {
  MlpHead head("head", 4, 6, 3, 1);
  zero_all(head.parameters());
  const auto p = head_predict(head, std::vector<double>{1, 2, 3, 4});
  for (double l : p.logits) EXPECT_EQ(l, 0.0);
  EXPECT_DOUBLE_EQ(p.duration, 0.5);
}

TEST(Head, DurationStaysInsideClampBounds) {
  MlpHead head("head", 4, 6, 3, 7);
  for (auto* p : head.parameters()) {
    for (double& v : p->value.data) v *= 40.0;  // saturate the sigmoid
  }
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> h(4);
    for (double& v : h) v = 10 * (2 * unit_uniform(rng) - 1);
    const double d = head_predict(head, h).duration;
    EXPECT_GE(d, kMinDuration);
    EXPECT_LE(d, 1.0);
  }
}

// Adding c to the bias of every class logit leaves the argmax unchanged.
TEST(Head, ArgmaxInvariantToSharedLogitShift) {
  MlpHead head("head", 4, 6, 5, 11);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(4);
    for (double& v : h) v = 2 * unit_uniform(rng) - 1;
    const auto before = head_predict(head, h).argmax();
    MlpHead shifted = head;
    auto& bias = shifted.mlp.layers.back().bias.value.data;
    const double c = 5 * (2 * unit_uniform(rng) - 1);
    for (std::size_t k = 0; k < shifted.label_out; ++k) bias[k] += c;
    EXPECT_EQ(head_predict(shifted, h).argmax(), before);
  }
}

TEST(Head, WrongHiddenWidthIsDimensionError) {
  MlpHead head("head", 4, 6, 3, 1);
  EXPECT_THROW(head_predict(head, std::vector<double>{1, 2}), DimensionError);
}

TEST(FitDuration, ClampsAndAbsorbsShortRemainders) {
  EXPECT_DOUBLE_EQ(fit_duration(0.0, 0.5), kMinDuration);
  EXPECT_DOUBLE_EQ(fit_duration(0.7, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(fit_duration(0.4995, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(fit_duration(0.3, 0.5), 0.3);
}

TEST(Loss, NllValues) {
  Graph g;
  EXPECT_NEAR(g.scalar_value(nll_loss(g, g.constant(std::vector<double>{0, 0}), 0)), std::log(2.0), 1e-15);
  // -log(e^10 / (e^10 + e^-10)) = log(1 + e^-20)
  EXPECT_NEAR(g.scalar_value(nll_loss(g, g.constant(std::vector<double>{10, -10}), 0)), std::log1p(std::exp(-20.0)),
              1e-22);
  EXPECT_NEAR(std::log1p(std::exp(-20.0)), 2.06e-9, 1e-11);
  EXPECT_THROW(nll_loss(g, g.zeros(2), 2), VocabularyError);
}

TEST(Loss, NllNonNegative) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    Graph g;
    std::vector<double> l(4);
    for (double& v : l) v = 20 * (2 * unit_uniform(rng) - 1);
    EXPECT_GE(g.scalar_value(nll_loss(g, g.constant(l), i % 4)), 0.0);
  }
}

TEST(Loss, MseValuesAndSymmetry) {
  Graph g;
  EXPECT_EQ(g.scalar_value(mse_loss(g, g.scalar(0.3), 0.3)), 0.0);
  EXPECT_EQ(g.scalar_value(mse_loss(g, g.scalar(0.0), 1.0)), 1.0);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const double a = unit_uniform(rng), b = unit_uniform(rng);
    EXPECT_DOUBLE_EQ(g.scalar_value(mse_loss(g, g.scalar(a), b)), g.scalar_value(mse_loss(g, g.scalar(b), a)));
  }
}

TEST(TaskWeighting, UnitWeightsSumLosses) {
  TaskWeights w({"enc.a", "ant.b"});
  Graph g;
  std::vector<std::pair<std::string, Var>> terms{{"enc.a", g.scalar(1.5)}, {"ant.b", g.scalar(2.0)}};
  EXPECT_DOUBLE_EQ(g.scalar_value(weighted_total_loss(g, terms, w)), 3.5);
  EXPECT_DOUBLE_EQ(g.scalar_value(weighted_total_loss(g, terms, w, false)), 2.0);
}

TEST(TaskWeighting, UnknownTaskIsConfigurationError) {
  TaskWeights w({"ant.b"});
  Graph g;
  std::vector<std::pair<std::string, Var>> terms{{"ant.c", g.scalar(1.0)}};
  EXPECT_THROW(weighted_total_loss(g, terms, w), ConfigurationError);
}

// d/ds [exp(-s) L + s] = 1 - exp(-s) L, zero at s = 0 for L = 1.
TEST(TaskWeighting, UnitLossHasStationaryWeightAtZero) {
  TaskWeights w({"ant.x"});
  auto params = w.parameters();
  auto f = [&](Graph& g) {
    std::vector<std::pair<std::string, Var>> terms{{"ant.x", g.scalar(1.0)}};
    return weighted_total_loss(g, terms, w);
  };
  Graph g;
  g.backward(f(g));
  EXPECT_NEAR(w.log_vars[0].grad.data[0], 0.0, 1e-15);
  w.log_vars[0].value.data[0] = 0.7;
  EXPECT_TRUE(grad_check(f, params, 1e-5, 1e-6).pass);
  w.log_vars[0].zero_grad();
  Graph g2;
  g2.backward(f(g2));
  EXPECT_NEAR(w.log_vars[0].grad.data[0], 1.0 - std::exp(-0.7), 1e-14);
}

TEST(TaskWeighting, ClampKeepsLogVarianceBounded) {
  TaskWeights w({"a", "b"});
  w.log_vars[0].value.data[0] = 25.0;
  w.log_vars[1].value.data[0] = -25.0;
  w.clamp();
  EXPECT_EQ(w.log_vars[0].value.data[0], TaskWeights::kClamp);
  EXPECT_EQ(w.log_vars[1].value.data[0], -TaskWeights::kClamp);
}
