// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hera/baselines.hpp"
#include "support.hpp"

using namespace hera;
using hera::testing::random_hierarchy;
using hera::testing::toy_hierarchy;

namespace {

HeraConfig small_config(std::uint64_t seed = 0) {
  HeraConfig c;
  c.hidden_size = 6;
  c.embed_dim = 3;
  c.mlp_width = 5;
  c.seed = seed;
  return c;
}

void expect_same_level(const LevelSequence& a, const LevelSequence& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.segments[i].label, b.segments[i].label);
    EXPECT_EQ(a.segments[i].rel_duration, b.segments[i].rel_duration);
  }
}

}  // namespace

TEST(Dummy, ExtendsInterruptedActivity) {
  const Forecast f = DummyForecaster{}.predict(split_at(toy_hierarchy(), 0.5));
  EXPECT_TRUE(validate(f.hierarchy).ok());
  const auto tl = absolute_timeline(f.hierarchy);
  ASSERT_EQ(tl[kCoarse].size(), 2u);
  EXPECT_EQ(tl[kCoarse][1].label, 1u);
  EXPECT_NEAR(tl[kCoarse][1].start, 0.4, 1e-12);
  EXPECT_NEAR(tl[kCoarse][1].end, 1.0, 1e-12);
  // fine: a, b, then c (in progress at 0.5) stretched to the end
  ASSERT_EQ(tl[kFine].size(), 3u);
  EXPECT_EQ(tl[kFine][2].label, 2u);
  EXPECT_NEAR(tl[kFine][2].start, 0.4, 1e-12);
  EXPECT_NEAR(tl[kFine][2].end, 1.0, 1e-12);
}

TEST(Dummy, CutOnBoundaryExtendsLastFinished) {
  const Forecast f = DummyForecaster{}.predict(split_at(toy_hierarchy(), 0.4));
  const auto tl = absolute_timeline(f.hierarchy);
  ASSERT_EQ(tl[kCoarse].size(), 1u);
  EXPECT_EQ(tl[kCoarse][0].label, 0u);
  EXPECT_EQ(tl[kFine].back().label, 1u);
}

TEST(Dummy, OutputValidOnRandomHierarchies) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 500; ++t) {
    const ActivityHierarchy h = random_hierarchy(rng);
    const double p = 0.05 + 0.9 * unit_uniform(rng);
    const Forecast f = DummyForecaster{}.predict(split_at(h, p));
    EXPECT_TRUE(validate(f.hierarchy).ok()) << "trial " << t;
  }
}

// The coarse roll-out never reads the fine level, so changing fine labels in
// the observation must leave the coarse forecast bit-identical.
TEST(IndependentRnn, CoarseForecastIgnoresFineLevel) {
  IndependentRnn m(small_config(3), 5, 8);
  std::mt19937_64 rng(32);
  for (int t = 0; t < 100; ++t) {
    ActivityHierarchy h = random_hierarchy(rng);
    const double p = 0.05 + 0.9 * unit_uniform(rng);
    const Forecast a = m.predict(split_at(h, p));
    for (auto& s : h.levels[kFine].segments) s.label = (s.label + 3) % 8;
    const Forecast b = m.predict(split_at(h, p));
    expect_same_level(a.hierarchy.coarse(), b.hierarchy.coarse());
    EXPECT_EQ(a.remaining_coarse, b.remaining_coarse);
  }
}

TEST(IndependentRnn, ForecastKeepsPrefixAndValidates) {
  IndependentRnn m(small_config(4), 5, 8);
  std::mt19937_64 rng(33);
  for (int t = 0; t < 100; ++t) {
    const ActivityHierarchy h = random_hierarchy(rng);
    const double p = 0.05 + 0.9 * unit_uniform(rng);
    const Forecast f = m.predict(split_at(h, p));
    EXPECT_TRUE(validate(f.hierarchy).ok()) << "trial " << t;
    const auto truth = absolute_timeline(h);
    const auto pred = absolute_timeline(f.hierarchy);
    // the first coarse activity starts with the observed label
    EXPECT_EQ(pred[kCoarse][0].label, truth[kCoarse][0].label);
    EXPECT_GE(f.remaining_coarse, 0.0);
    EXPECT_LE(f.remaining_coarse, 1.0 - p + 1e-12);
  }
}

TEST(IndependentRnn, LossIsFiniteAndGradientsCheck) {
  IndependentRnn m(small_config(5), 2, 4);
  const auto split = split_at(toy_hierarchy(), 0.5);
  Graph g;
  std::vector<std::pair<std::string, Var>> terms;
  const double loss = g.scalar_value(m.compute_loss(g, split, nullptr, &terms));
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(terms.size(), 4u);
  auto params = m.parameters();
  const auto r = grad_check([&](Graph& gg) { return m.compute_loss(gg, split); }, params, 1e-5, 1e-4);
  EXPECT_TRUE(r.pass) << r.worst()->name << " " << r.worst()->max_rel_error;
}

TEST(IndependentRnn, RejectsEmptyVocabulary) {
  EXPECT_THROW(IndependentRnn(small_config(), 0, 4), ConfigurationError);
}

TEST(FineClockRnn, InputWidths) {
  const auto cfg = small_config();
  FineClockRnn joint(FineClockRnn::Variant::Joint, cfg, 2, 4);
  EXPECT_EQ(joint.gru.W_z.value.cols, 4 * cfg.embed_dim);
  FineClockRnn synced(FineClockRnn::Variant::Synced, cfg, 2, 4);
  EXPECT_EQ(synced.gru.W_z.value.cols, 2 * cfg.embed_dim + cfg.hidden_size);
  EXPECT_EQ(synced.coarse_gru.W_z.value.cols, 2 * cfg.embed_dim);
}

TEST(FineClockRnn, LossFiniteAndGradientsCheck) {
  for (auto v : {FineClockRnn::Variant::Joint, FineClockRnn::Variant::Synced}) {
    for (bool messages : {true, false}) {
      auto cfg = small_config(6);
      cfg.cross_level_messages = messages;
      FineClockRnn m(v, cfg, 2, 4);
      const auto split = split_at(toy_hierarchy(), 0.5);
      Graph g;
      EXPECT_TRUE(std::isfinite(g.scalar_value(m.compute_loss(g, split))));
      auto params = m.parameters();
      const auto r = grad_check([&](Graph& gg) { return m.compute_loss(gg, split); }, params, 1e-5, 1e-4);
      EXPECT_TRUE(r.pass) << r.worst()->name << " " << r.worst()->max_rel_error;
    }
  }
}

TEST(FineClockRnn, ForecastsValidate) {
  std::mt19937_64 rng(34);
  for (auto v : {FineClockRnn::Variant::Joint, FineClockRnn::Variant::Synced}) {
    FineClockRnn m(v, small_config(7), 5, 8);
    for (int t = 0; t < 100; ++t) {
      const ActivityHierarchy h = random_hierarchy(rng);
      const double p = 0.05 + 0.9 * unit_uniform(rng);
      const Forecast f = m.predict(split_at(h, p));
      EXPECT_TRUE(validate(f.hierarchy).ok()) << "trial " << t;
      EXPECT_GE(f.remaining_fine, 0.0);
    }
  }
}

TEST(FineClockRnn, SyncedWithoutMessagesIgnoresCoarseStateInFineGru) {
  auto cfg = small_config(8);
  cfg.cross_level_messages = false;
  FineClockRnn m(FineClockRnn::Variant::Synced, cfg, 2, 4);
  const auto split = split_at(toy_hierarchy(), 0.5);
  Graph g;
  g.backward(m.compute_loss(g, split));
  // the message columns of the fine GRU only ever multiply zeros
  const std::size_t from = 2 * cfg.embed_dim;
  for (std::size_t r = 0; r < cfg.hidden_size; ++r) {
    for (std::size_t c = from; c < m.gru.W_z.value.cols; ++c) EXPECT_EQ(m.gru.W_z.grad(r, c), 0.0);
  }
}
