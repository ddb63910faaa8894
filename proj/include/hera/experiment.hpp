// SPDX-License-Identifier: Apache-2.0
//
// Cross-validated evaluation: train per fold, forecast every test video at
// every (observe, horizon) cell, score both levels, write CSV tables.
#pragma once

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "hera/annotations.hpp"
#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/metrics.hpp"
#include "hera/training.hpp"

namespace hera {

enum class MetricKind : std::uint8_t { F1, MoC, MoF, Edit };

inline std::string metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::F1: return "f1k";
    case MetricKind::MoC: return "moc";
    case MetricKind::MoF: return "mof";
    case MetricKind::Edit: return "edit";
  }
  return "?";
}

inline MetricKind parse_metric(const std::string& s) {
  for (MetricKind m : {MetricKind::F1, MetricKind::MoC, MetricKind::MoF, MetricKind::Edit}) {
    if (metric_name(m) == s) return m;
  }
  throw ConfigurationError("unknown metric '" + s + "' (expected f1k, moc, mof or edit)");
}

inline std::string level_name(std::size_t level) { return level == kCoarse ? "coarse" : "fine"; }

/// Ground-truth and predicted frame labels of one level over the evaluated
/// horizon: `horizon * total_frames` frames after the observed prefix,
/// clipped at the end of the video.
struct HorizonFrames {
  std::vector<ClassId> predicted;
  std::vector<ClassId> truth;
};

inline HorizonFrames horizon_frames(const ActivityHierarchy& truth, const ActivityHierarchy& predicted,
                                    std::size_t observed_frames, double horizon, std::size_t level) {
  if (!(horizon > 0.0)) throw ContractError("horizon must be positive");
  const std::size_t T = truth.total_frames;
  const auto want = static_cast<std::size_t>(std::llround(horizon * static_cast<double>(T)));
  const std::size_t end = std::min(T, observed_frames + std::max<std::size_t>(want, 1));
  const auto t = to_frame_labels(truth, level, T).labels;
  const auto p = to_frame_labels(predicted, level, T).labels;
  HorizonFrames out;
  out.truth.assign(t.begin() + static_cast<std::ptrdiff_t>(observed_frames), t.begin() + static_cast<std::ptrdiff_t>(end));
  out.predicted.assign(p.begin() + static_cast<std::ptrdiff_t>(observed_frames),
                       p.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

inline double score(MetricKind m, const HorizonFrames& f, double k) {
  switch (m) {
    case MetricKind::F1: return f1_at_k(f.predicted, f.truth, k).f1;
    case MetricKind::MoC: return moc(f.predicted, f.truth);
    case MetricKind::MoF: return mof(f.predicted, f.truth);
    case MetricKind::Edit: {
      const auto a = run_labels(f.predicted);
      const auto b = run_labels(f.truth);
      return segmental_edit_distance(a, b);
    }
  }
  return 0.0;
}

struct ExperimentConfig {
  ModelKind kind = ModelKind::Hera;
  HeraConfig model;
  std::vector<double> observe{0.2, 0.3};
  std::vector<double> horizons{0.1, 0.2, 0.3, 0.5, 0.7, 0.8};
  std::vector<MetricKind> metrics{MetricKind::F1, MetricKind::MoC, MetricKind::MoF, MetricKind::Edit};
  std::size_t folds = 4;
  std::optional<std::size_t> only_fold;  // run a single fold (0-based)
  std::uint64_t seed = 0;                // fold assignment
  double k = 0.25;
  std::size_t threads = 1;  // evaluation workers; results do not depend on it

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigurationError("experiment: " + what); };
    if (observe.empty() || horizons.empty() || metrics.empty()) fail("observe, horizons and metrics must be non-empty");
    for (double p : observe) {
      if (!(p > 0.0 && p < 1.0)) fail("observe fractions must lie in (0, 1)");
    }
    for (double q : horizons) {
      if (!(q > 0.0 && q <= 1.0)) fail("horizons must lie in (0, 1]");
    }
    if (!(k > 0.0 && k < 1.0)) fail("k must lie in (0, 1)");
    if (only_fold && *only_fold >= folds) fail("fold index out of range");
    if (threads == 0) fail("threads must be positive");
  }
};

struct ResultCell {
  std::string model;
  std::size_t fold = 0;
  double observe = 0.0;
  double horizon = 0.0;
  std::string level;
  std::string metric;
  double value = 0.0;
};

struct VideoRow {
  std::string model;
  std::size_t fold = 0;
  std::string video_id;
  double observe = 0.0;
  double horizon = 0.0;
  std::string level;
  std::string metric;
  double value = 0.0;
};

struct ExperimentResult {
  std::vector<ResultCell> summary;     // mean over test videos
  std::vector<ResultCell> moc_pooled;  // MoC over the pooled frames of all test videos
  std::vector<VideoRow> per_video;
  std::vector<TrainReport> training;   // one per evaluated fold (empty for the dummy)
  std::size_t truncated_forecasts = 0;
};

struct FoldData {
  std::vector<Video> train, validation, test;
};

inline FoldData fold_data(const std::vector<Video>& videos, const Fold& fold) {
  const std::set<std::string> train(fold.train.begin(), fold.train.end());
  const std::set<std::string> test(fold.test.begin(), fold.test.end());
  FoldData d;
  for (const Video& v : videos) {
    if (test.count(v.person_id)) {
      d.test.push_back(v);
    } else if (v.person_id == fold.validation) {
      d.validation.push_back(v);
    } else if (train.count(v.person_id)) {
      d.train.push_back(v);
    }
  }
  return d;
}

/// Forecasts of every test video at every observe fraction, computed by
/// `threads` workers over a read-only model. Index: [video][observe].
inline std::vector<std::vector<Forecast>> forecast_all(const AnyModel& model, const std::vector<Video>& videos,
                                                       const std::vector<double>& observe, std::size_t threads) {
  std::vector<std::vector<Forecast>> out(videos.size(), std::vector<Forecast>(observe.size()));
  auto work = [&](std::size_t worker) {
    for (std::size_t v = worker; v < videos.size(); v += threads) {
      for (std::size_t o = 0; o < observe.size(); ++o) out[v][o] = predict(model, split_at(videos[v].hierarchy, observe[o]));
    }
  };
  if (threads <= 1) {
    work(0);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  for (auto& t : pool) t.join();
  return out;
}

/// Scores a trained model on test videos and appends the cells of `fold`.
inline void evaluate_fold(const AnyModel& model, const std::vector<Video>& test, const ExperimentConfig& cfg,
                          std::size_t fold, ExperimentResult& result) {
  if (test.empty()) throw ContractError("evaluate: fold " + std::to_string(fold) + " has no test videos");
  const std::string name = model_kind_name(cfg.kind);
  const auto forecasts = forecast_all(model, test, cfg.observe, cfg.threads);
  for (const auto& row : forecasts) {
    for (const auto& f : row) result.truncated_forecasts += f.truncated;
  }
  for (std::size_t o = 0; o < cfg.observe.size(); ++o) {
    for (double q : cfg.horizons) {
      for (std::size_t level : {kCoarse, kFine}) {
        std::vector<std::pair<std::vector<ClassId>, std::vector<ClassId>>> pooled;
        std::vector<double> sums(cfg.metrics.size(), 0.0);
        for (std::size_t v = 0; v < test.size(); ++v) {
          const ObservationSplit s = split_at(test[v].hierarchy, cfg.observe[o]);
          const HorizonFrames hf =
              horizon_frames(test[v].hierarchy, forecasts[v][o].hierarchy, s.observed_frames, q, level);
          for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
            const double value = score(cfg.metrics[m], hf, cfg.k);
            sums[m] += value;
            result.per_video.push_back(
                {name, fold, test[v].video_id, cfg.observe[o], q, level_name(level), metric_name(cfg.metrics[m]), value});
          }
          pooled.emplace_back(hf.predicted, hf.truth);
        }
        for (std::size_t m = 0; m < cfg.metrics.size(); ++m) {
          result.summary.push_back({name, fold, cfg.observe[o], q, level_name(level), metric_name(cfg.metrics[m]),
                                    sums[m] / static_cast<double>(test.size())});
        }
        result.moc_pooled.push_back({name, fold, cfg.observe[o], q, level_name(level), "moc_pooled", moc_pooled(pooled)});
      }
    }
  }
}

using FoldCallback = std::function<void(std::size_t fold, const EpochRecord&)>;

/// Leave-persons-out experiment over `videos`; trainable models are
/// trained from scratch on every fold.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::vector<Video>& videos,
                                       const Vocabularies& vocab, const FoldCallback& on_epoch = {}) {
  cfg.validate();
  std::vector<std::string> persons;
  for (const Video& v : videos) persons.push_back(v.person_id);
  const auto folds = make_cv_splits(persons, cfg.folds, cfg.seed);
  ExperimentResult result;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (cfg.only_fold && *cfg.only_fold != f) continue;
    const FoldData data = fold_data(videos, folds[f]);
    AnyModel model = make_model(cfg.kind, cfg.model, vocab.coarse.size(), vocab.fine.size());
    if (is_trainable(model)) {
      result.training.push_back(fit(model, data.train, data.validation, [&](const EpochRecord& r) {
        if (on_epoch) on_epoch(f, r);
      }));
    }
    evaluate_fold(model, data.test, cfg, f, result);
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline void write_summary_csv(std::ostream& out, const std::vector<ResultCell>& cells) {
  out << "model,fold,observe,horizon,level,metric,value\n";
  for (const auto& c : cells) {
    out << c.model << ',' << c.fold << ',' << format_fraction(c.observe) << ',' << format_fraction(c.horizon) << ','
        << c.level << ',' << c.metric << ',' << format_number(c.value) << '\n';
  }
}

inline void write_per_video_csv(std::ostream& out, const std::vector<VideoRow>& rows) {
  out << "model,fold,video_id,observe,horizon,level,metric,value\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.fold << ',' << r.video_id << ',' << format_fraction(r.observe) << ','
        << format_fraction(r.horizon) << ',' << r.level << ',' << r.metric << ',' << format_number(r.value) << '\n';
  }
}

/// Mean over folds of one summary cell; NaN when absent.
inline double mean_over_folds(const std::vector<ResultCell>& cells, double observe, double horizon,
                              const std::string& level, const std::string& metric) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (std::abs(c.observe - observe) < 1e-9 && std::abs(c.horizon - horizon) < 1e-9 && c.level == level &&
        c.metric == metric) {
      total += c.value;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : std::nan("");
}

}  // namespace hera
