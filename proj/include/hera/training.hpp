// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch training with per-epoch validation and best-epoch snapshots,
// plus a tagged union over every forecaster kind.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "hera/annotations.hpp"
#include "hera/autodiff.hpp"
#include "hera/baselines.hpp"
#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/model.hpp"
#include "hera/optim.hpp"

namespace hera {

enum class ModelKind : std::uint8_t { Hera, Dummy, IndependentRnn, JointRnn, SyncedRnn };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Hera: return "hera";
    case ModelKind::Dummy: return "dummy";
    case ModelKind::IndependentRnn: return "ind-rnn";
    case ModelKind::JointRnn: return "joint-rnn";
    case ModelKind::SyncedRnn: return "synced-rnn";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::Hera, ModelKind::Dummy, ModelKind::IndependentRnn, ModelKind::JointRnn,
                      ModelKind::SyncedRnn}) {
    if (model_kind_name(k) == name) return k;
  }
  throw ConfigurationError("unknown model '" + name + "' (expected hera, dummy, ind-rnn, joint-rnn or synced-rnn)");
}

using AnyModel = std::variant<HeraModel, DummyForecaster, IndependentRnn, FineClockRnn>;

inline AnyModel make_model(ModelKind kind, const HeraConfig& cfg, std::size_t n_coarse, std::size_t n_fine) {
  switch (kind) {
    case ModelKind::Hera: return HeraModel(cfg, n_coarse, n_fine);
    case ModelKind::Dummy: return DummyForecaster{};
    case ModelKind::IndependentRnn: return IndependentRnn(cfg, n_coarse, n_fine);
    case ModelKind::JointRnn: return FineClockRnn(FineClockRnn::Variant::Joint, cfg, n_coarse, n_fine);
    case ModelKind::SyncedRnn: return FineClockRnn(FineClockRnn::Variant::Synced, cfg, n_coarse, n_fine);
  }
  throw ConfigurationError("make_model: unknown kind");
}

inline bool is_trainable(const AnyModel& m) { return !std::holds_alternative<DummyForecaster>(m); }

inline std::vector<Parameter*> model_parameters(AnyModel& m) {
  return std::visit(
      [](auto& x) -> std::vector<Parameter*> {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DummyForecaster>) {
          return {};
        } else {
          return x.parameters();
        }
      },
      m);
}

inline Forecast predict(const AnyModel& m, const ObservationSplit& split) {
  return std::visit([&](const auto& x) { return x.predict(split); }, m);
}

// ---------------------------------------------------------------------------
// training loop

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;       // mean per-sample loss over the epoch
  double validation_loss = 0.0;  // NaN without validation videos
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Cuts used for the validation loss; fixed so epochs are comparable.
inline std::vector<double> validation_cuts() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

template <class Model>
double mean_loss(const Model& model, const std::vector<Video>& videos) {
  double total = 0.0;
  std::size_t n = 0;
  for (const Video& v : videos) {
    for (double p : validation_cuts()) {
      Graph g;
      total += g.scalar_value(model.compute_loss(g, split_at(v.hierarchy, p)));
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

/// ADAM over mini-batches of observation splits. Every epoch draws
/// `splits_per_video` cuts p ~ U[min_observe, max_observe] per training
/// video, shuffles them and steps once per `batch_size` splits (gradients
/// averaged over the batch). The model ends up holding the parameters of
/// the epoch with the lowest validation loss (the last epoch when there is
/// no validation data).
template <class Model>
TrainReport fit(Model& model, const std::vector<Video>& train, const std::vector<Video>& validation,
                const EpochCallback& on_epoch = {}) {
  const HeraConfig& cfg = model.config;
  cfg.validate();
  if (train.empty()) throw ContractError("fit: no training videos");
  std::vector<Parameter*> params = model.parameters();
  zero_grads(params);
  const AdamConfig adam{cfg.lr};

  TrainReport report;
  Model best = model;
  double best_loss = std::numeric_limits<double>::infinity();

  struct Sample {
    std::size_t video;
    double p;
  };
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 1000 + epoch));
    std::vector<Sample> samples;
    samples.reserve(train.size() * cfg.splits_per_video);
    for (std::size_t v = 0; v < train.size(); ++v) {
      for (std::size_t s = 0; s < cfg.splits_per_video; ++s) {
        samples.push_back({v, cfg.min_observe + (cfg.max_observe - cfg.min_observe) * unit_uniform(rng)});
      }
    }
    seeded_shuffle(samples, mix_seed(cfg.seed, 2000 + epoch));

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
      for (std::size_t i = begin; i < end; ++i) {
        Graph g;
        const ObservationSplit split = split_at(train[samples[i].video].hierarchy, samples[i].p);
        Var loss = model.compute_loss(g, split, &rng);
        const double value = g.scalar_value(loss);
        if (!std::isfinite(value)) throw NumericError("fit: non-finite loss in epoch " + std::to_string(epoch));
        epoch_loss += value;
        g.backward(loss);
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (Parameter* p : params) {
        for (double& gv : p->grad.data) gv *= scale;
      }
      adam_step(params, adam);
      model.after_step();
      ++report.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(samples.size());
    rec.validation_loss = validation.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_loss(model, validation);
    report.epochs.push_back(rec);
    const double criterion = validation.empty() ? -static_cast<double>(epoch) : rec.validation_loss;
    if (criterion < best_loss) {
      best_loss = criterion;
      best = model;
      report.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
  }
  model = std::move(best);
  return report;
}

inline TrainReport fit(AnyModel& model, const std::vector<Video>& train, const std::vector<Video>& validation,
                       const EpochCallback& on_epoch = {}) {
  return std::visit(
      [&](auto& m) -> TrainReport {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, DummyForecaster>) {
          return {};
        } else {
          return fit(m, train, validation, on_epoch);
        }
      },
      model);
}

}  // namespace hera
