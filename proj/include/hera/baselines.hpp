// SPDX-License-Identifier: Apache-2.0
//
// Reference forecasters. All of them produce per-level timelines in task
// fractions and convert them into a hierarchy at the end, so their output
// is scored exactly like the main model's.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hera/autodiff.hpp"
#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/model.hpp"
#include "hera/nn.hpp"

namespace hera {

/// Observed part of both levels on the task timeline. The last segment of a
/// level ends at t* and is in progress when `partial[level]` is set.
struct ObservedTimelines {
  std::vector<TimedSegment> coarse;
  std::vector<TimedSegment> fine;
  std::vector<std::size_t> fine_parent;  // index into `coarse`
  bool coarse_partial = false;
  bool fine_partial = false;
};

inline ObservedTimelines observed_timelines(const ObservationSplit& s) {
  ObservedTimelines out;
  const LevelSequence& C = s.observed.coarse();
  const LevelSequence& F = s.observed.fine();
  const Interruption& pc = s.partial[kCoarse];
  const Interruption& pf = s.partial[kFine];
  double t = 0.0;
  for (const auto& c : C.segments) {
    out.coarse.push_back({c.label, t, t + c.rel_duration});
    t += c.rel_duration;
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < C.size(); ++i) {
    double at = out.coarse[i].start;
    const double span = out.coarse[i].length();
    for (; k < F.size() && F.parent_index[k] == i; ++k) {
      const double len = F.segments[k].rel_duration * span;
      out.fine.push_back({F.segments[k].label, at, at + len});
      out.fine_parent.push_back(i);
      at += len;
    }
  }
  if (pc.present) {
    const double start = s.t_star - pc.elapsed;
    out.coarse.push_back({pc.label, start, s.t_star});
    out.coarse_partial = true;
    double at = start;
    for (double e : s.interrupted_children_elapsed) {
      out.fine.push_back({F.segments.at(k++).label, at, at + e});
      out.fine_parent.push_back(out.coarse.size() - 1);
      at += e;
    }
    if (pf.present) {
      out.fine.push_back({pf.label, s.t_star - pf.elapsed, s.t_star});
      out.fine_parent.push_back(out.coarse.size() - 1);
      out.fine_partial = true;
    }
  }
  return out;
}

/// Extends the segment in progress at t* (or the last finished one) to the
/// end of the task at every level.
class DummyForecaster {
 public:
  Forecast predict(const ObservationSplit& s) const {
    ObservedTimelines tl = observed_timelines(s);
    if (tl.coarse.empty() || tl.fine.empty()) throw ContractError("DummyForecaster: nothing observed");
    tl.coarse.back().end = 1.0;
    tl.fine.back().end = 1.0;
    Forecast f;
    f.hierarchy = hierarchy_from_timelines(tl.coarse, tl.fine, s.observed.task_id, s.observed.total_frames);
    return f;
  }
};

namespace detail {

/// Teacher-forcing pairs over one level: state before each segment
/// predicts it. Durations are task fractions.
struct LevelTrack {
  std::vector<ClassId> labels;
  std::vector<double> durations;
};

inline LevelTrack level_track(const ActivityHierarchy& h, std::size_t level) {
  LevelTrack t;
  const auto timeline = absolute_timeline(h);
  for (const TimedSegment& s : timeline[level]) {
    t.labels.push_back(s.label);
    t.durations.push_back(s.length());
  }
  return t;
}

}  // namespace detail

/// One GRU per level, each blind to the other level. Durations are task
/// fractions at both levels; the segment in progress at t* keeps its label
/// and gets max(predicted - elapsed, 0) more time.
class IndependentRnn {
 public:
  struct Level {
    EmbeddingTable labels;     // last row: start token
    EmbeddingTable durations;
    GruCell gru;
    MlpHead head;
  };

  HeraConfig config;
  std::size_t coarse_classes = 0;
  std::size_t fine_classes = 0;
  std::vector<Level> levels;

  IndependentRnn() = default;
  IndependentRnn(const HeraConfig& cfg, std::size_t n_coarse, std::size_t n_fine)
      : config(cfg), coarse_classes(n_coarse), fine_classes(n_fine) {
    cfg.validate();
    if (n_coarse == 0 || n_fine == 0) throw ConfigurationError("IndependentRnn: empty vocabulary");
    const std::size_t H = cfg.hidden_size, E = cfg.embed_dim;
    std::uint64_t salt = 200;
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string p = l == kCoarse ? "ind.coarse" : "ind.fine";
      const std::size_t V = l == kCoarse ? n_coarse : n_fine;
      Level lv;
      lv.labels = EmbeddingTable(p + ".emb", V + 1, E, mix_seed(cfg.seed, salt++));
      lv.durations = EmbeddingTable(p + ".emb_duration", kDurationBins, E, mix_seed(cfg.seed, salt++));
      lv.gru = GruCell(p + ".gru", 2 * E, H, mix_seed(cfg.seed, salt++));
      lv.head = MlpHead(p + ".head", H, cfg.mlp_width, V, mix_seed(cfg.seed, salt++));
      levels.push_back(std::move(lv));
    }
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& lv : levels) {
      out.push_back(&lv.labels.matrix);
      out.push_back(&lv.durations.matrix);
      for (Parameter* p : lv.gru.parameters()) out.push_back(p);
      for (Parameter* p : lv.head.parameters()) out.push_back(p);
    }
    return out;
  }

  void after_step() {}

  /// Whole-video teacher-forced loss; the cut point of the split is unused.
  Var compute_loss(Graph& g, const ObservationSplit& split, std::mt19937_64* = nullptr,
                   std::vector<std::pair<std::string, Var>>* per_task = nullptr) const {
    const ActivityHierarchy truth = reassemble(split);
    std::vector<std::pair<std::string, Var>> terms;
    for (std::size_t l = 0; l < 2; ++l) {
      const Level& lv = levels[l];
      const detail::LevelTrack t = detail::level_track(truth, l);
      std::vector<Var> label_terms, duration_terms;
      Var h = step(g, lv, g.zeros(config.hidden_size), lv.labels.vocab_size() - 1, 0.0);
      double acc = 0.0;
      for (std::size_t i = 0; i < t.labels.size(); ++i) {
        const HeadOutput out = lv.head.forward(g, h);
        label_terms.push_back(nll_loss(g, out.logits, t.labels[i]));
        duration_terms.push_back(mse_loss(g, out.duration, t.durations[i]));
        acc += t.durations[i];
        if (i + 1 < t.labels.size()) h = step(g, lv, h, t.labels[i], acc);
      }
      const std::string tag = l == kCoarse ? "coarse" : "fine";
      const double n = static_cast<double>(label_terms.size());
      terms.emplace_back(tag + ".label", g.scale(g.sum_all(label_terms), 1.0 / n));
      terms.emplace_back(tag + ".duration", g.scale(g.sum_all(duration_terms), 1.0 / n));
    }
    if (per_task) *per_task = terms;
    std::vector<Var> all;
    for (const auto& [name, v] : terms) all.push_back(v);
    return g.sum_all(all);
  }

  Forecast predict(const ObservationSplit& s) const {
    const ObservedTimelines tl = observed_timelines(s);
    Forecast f;
    bool truncated = false;
    const auto coarse = roll(levels[kCoarse], tl.coarse, tl.coarse_partial, s.t_star, f.remaining_coarse, truncated);
    const auto fine = roll(levels[kFine], tl.fine, tl.fine_partial, s.t_star, f.remaining_fine, truncated);
    f.truncated = truncated;
    f.hierarchy = hierarchy_from_timelines(coarse, fine, s.observed.task_id, s.observed.total_frames);
    return f;
  }

 private:
  static std::size_t bin(double acc) { return duration_bin(std::clamp(acc, 0.0, 1.0)); }

  static Var step(Graph& g, const Level& lv, Var h, ClassId label, double acc) {
    return lv.gru.step(g, g.concat({lv.labels.lookup(g, label), lv.durations.lookup(g, bin(acc))}), h);
  }

  std::vector<TimedSegment> roll(const Level& lv, std::vector<TimedSegment> segs, bool partial, double t_star,
                                 double& remaining, bool& truncated) const {
    Graph g;
    Var h = step(g, lv, g.zeros(config.hidden_size), lv.labels.vocab_size() - 1, 0.0);
    const std::size_t finished = segs.size() - (partial ? 1 : 0);
    for (std::size_t i = 0; i < finished; ++i) h = step(g, lv, h, segs[i].label, segs[i].end);
    double acc = t_star;
    if (partial) {
      const HeadPrediction p = evaluate_head(g, lv.head, h);
      remaining = std::max(p.duration - segs.back().length(), 0.0);
      if (1.0 - (acc + remaining) < kMinDuration) remaining = 1.0 - acc;
      acc += remaining;
      segs.back().end = acc;
      h = step(g, lv, h, segs.back().label, acc);
    }
    std::size_t steps = 0;
    while (acc < 1.0 - 1e-12) {
      if (steps == config.max_rollout_steps_per_level) {
        truncated = true;
        segs.back().end = 1.0;
        break;
      }
      const HeadPrediction p = evaluate_head(g, lv.head, h);
      const double d = fit_duration(p.duration, 1.0 - acc);
      segs.push_back({p.argmax(), acc, acc + d});
      acc += d;
      ++steps;
      h = step(g, lv, h, p.argmax(), acc);
    }
    return segs;
  }
};

/// Recurrent baselines that step once per fine segment and predict both
/// levels at every step.
///
/// Joint: one GRU reads (coarse label, coarse start, fine label, fine end)
/// and a single MLP emits coarse and fine label/duration outputs.
/// Synced: a coarse GRU and a fine GRU advance together on the fine clock;
/// with messages enabled the fine GRU also reads the new coarse state.
class FineClockRnn {
 public:
  enum class Variant : std::uint8_t { Joint, Synced };

  struct ClockStep {
    ClassId coarse = 0;
    double coarse_start = 0.0;
    ClassId fine = 0;
    double fine_end = 0.0;
  };

  Variant variant = Variant::Joint;
  HeraConfig config;
  std::size_t coarse_classes = 0;
  std::size_t fine_classes = 0;
  EmbeddingTable coarse_labels, fine_labels, coarse_durations, fine_durations;  // label tables end with a start row
  GruCell gru;         // Joint: the only GRU; Synced: the fine GRU
  GruCell coarse_gru;  // Synced only
  Mlp joint_head;      // Joint only
  MlpHead coarse_head, fine_head;  // Synced only

  FineClockRnn() = default;
  FineClockRnn(Variant v, const HeraConfig& cfg, std::size_t n_coarse, std::size_t n_fine)
      : variant(v), config(cfg), coarse_classes(n_coarse), fine_classes(n_fine) {
    cfg.validate();
    if (n_coarse == 0 || n_fine == 0) throw ConfigurationError("FineClockRnn: empty vocabulary");
    const std::size_t H = cfg.hidden_size, E = cfg.embed_dim, W = cfg.mlp_width;
    const std::string p = v == Variant::Joint ? "joint" : "synced";
    std::uint64_t salt = v == Variant::Joint ? 300 : 400;
    auto seed = [&] { return mix_seed(cfg.seed, salt++); };
    coarse_labels = EmbeddingTable(p + ".emb.coarse", n_coarse + 1, E, seed());
    fine_labels = EmbeddingTable(p + ".emb.fine", n_fine + 1, E, seed());
    coarse_durations = EmbeddingTable(p + ".emb.coarse_duration", kDurationBins, E, seed());
    fine_durations = EmbeddingTable(p + ".emb.fine_duration", kDurationBins, E, seed());
    if (v == Variant::Joint) {
      gru = GruCell(p + ".gru", 4 * E, H, seed());
      joint_head = Mlp(p + ".head", {H, W, n_coarse + 1 + n_fine + 1}, Activation::Identity, seed());
    } else {
      coarse_gru = GruCell(p + ".gru.coarse", 2 * E, H, seed());
      gru = GruCell(p + ".gru.fine", 2 * E + H, H, seed());
      coarse_head = MlpHead(p + ".head.coarse", H, W, n_coarse, seed());
      fine_head = MlpHead(p + ".head.fine", H, W, n_fine, seed());
    }
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* e : {&coarse_labels, &fine_labels, &coarse_durations, &fine_durations}) out.push_back(&e->matrix);
    auto append = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    append(gru.parameters());
    if (variant == Variant::Joint) {
      append(joint_head.parameters());
    } else {
      append(coarse_gru.parameters());
      append(coarse_head.parameters());
      append(fine_head.parameters());
    }
    return out;
  }

  void after_step() {}

  /// Whole-video teacher-forced loss; the cut point of the split is unused.
  Var compute_loss(Graph& g, const ObservationSplit& split, std::mt19937_64* = nullptr,
                   std::vector<std::pair<std::string, Var>>* per_task = nullptr) const {
    const ActivityHierarchy truth = reassemble(split);
    const auto tl = absolute_timeline(truth);
    const LevelSequence& F = truth.fine();
    std::array<std::vector<Var>, 4> terms;
    State st = start(g);
    for (std::size_t k = 0; k < F.size(); ++k) {
      const TimedSegment& parent = tl[kCoarse][F.parent_index[k]];
      const TimedSegment& child = tl[kFine][k];
      const Outputs out = heads(g, st);
      terms[0].push_back(nll_loss(g, out.coarse.logits, parent.label));
      terms[1].push_back(mse_loss(g, out.coarse.duration, parent.length()));
      terms[2].push_back(nll_loss(g, out.fine.logits, child.label));
      terms[3].push_back(mse_loss(g, out.fine.duration, child.length()));
      if (k + 1 < F.size()) st = step(g, st, {parent.label, parent.start, child.label, child.end});
    }
    static const char* names[] = {"coarse.label", "coarse.duration", "fine.label", "fine.duration"};
    std::vector<std::pair<std::string, Var>> means;
    std::vector<Var> all;
    for (std::size_t t = 0; t < 4; ++t) {
      Var m = g.scale(g.sum_all(terms[t]), 1.0 / static_cast<double>(terms[t].size()));
      means.emplace_back(names[t], m);
      all.push_back(m);
    }
    if (per_task) *per_task = means;
    return g.sum_all(all);
  }

  Forecast predict(const ObservationSplit& s) const {
    const ObservedTimelines tl = observed_timelines(s);
    Graph g;
    State st = start(g);
    std::vector<TimedSegment> coarse = tl.coarse;
    std::vector<TimedSegment> fine = tl.fine;
    const std::size_t finished = fine.size() - (tl.fine_partial ? 1 : 0);
    for (std::size_t k = 0; k < finished; ++k) {
      const TimedSegment& parent = tl.coarse[tl.fine_parent[k]];
      st = step(g, st, {parent.label, parent.start, fine[k].label, fine[k].end});
    }
    Forecast f;
    double acc = s.t_star;
    ClassId cur_coarse = coarse.back().label;
    double cur_start = coarse.back().start;
    if (tl.fine_partial) {
      const Prediction p = predict_heads(g, st);
      f.remaining_fine = std::max(p.fine.duration - fine.back().length(), 0.0);
      if (1.0 - (acc + f.remaining_fine) < kMinDuration) f.remaining_fine = 1.0 - acc;
      acc += f.remaining_fine;
      fine.back().end = acc;
      coarse.back().end = acc;
      st = step(g, st, {cur_coarse, cur_start, fine.back().label, acc});
    }
    std::size_t steps = 0;
    while (acc < 1.0 - 1e-12) {
      if (steps == config.max_rollout_steps_per_level) {
        f.truncated = true;
        fine.back().end = 1.0;
        coarse.back().end = 1.0;
        break;
      }
      const Prediction p = predict_heads(g, st);
      const ClassId c = p.coarse.argmax();
      if (c != cur_coarse) {
        cur_coarse = c;
        cur_start = acc;
      }
      const double d = fit_duration(p.fine.duration, 1.0 - acc);
      fine.push_back({p.fine.argmax(), acc, acc + d});
      coarse.push_back({c, acc, acc + d});
      acc += d;
      ++steps;
      st = step(g, st, {c, cur_start, p.fine.argmax(), acc});
    }
    f.hierarchy = hierarchy_from_timelines(coarse, fine, s.observed.task_id, s.observed.total_frames);
    return f;
  }

 private:
  struct State {
    Var h;    // joint state, or the fine state
    Var h_c;  // synced coarse state
  };
  struct Outputs {
    HeadOutput coarse, fine;
  };
  struct Prediction {
    HeadPrediction coarse, fine;
  };

  static std::size_t bin(double acc) { return duration_bin(std::clamp(acc, 0.0, 1.0)); }

  State start(Graph& g) const {
    State st{g.zeros(config.hidden_size), g.zeros(config.hidden_size)};
    return step(g, st, {coarse_classes, 0.0, fine_classes, 0.0});
  }

  State step(Graph& g, State st, const ClockStep& x) const {
    Var c_in = g.concat({coarse_labels.lookup(g, x.coarse), coarse_durations.lookup(g, bin(x.coarse_start))});
    Var f_in = g.concat({fine_labels.lookup(g, x.fine), fine_durations.lookup(g, bin(x.fine_end))});
    if (variant == Variant::Joint) {
      st.h = gru.step(g, g.concat({c_in, f_in}), st.h);
      return st;
    }
    st.h_c = coarse_gru.step(g, c_in, st.h_c);
    Var msg = config.cross_level_messages ? st.h_c : g.zeros(config.hidden_size);
    st.h = gru.step(g, g.concat({f_in, msg}), st.h);
    return st;
  }

  Outputs heads(Graph& g, const State& st) const {
    if (variant == Variant::Synced) return {coarse_head.forward(g, st.h_c), fine_head.forward(g, st.h)};
    Var out = joint_head.forward(g, st.h);
    const std::size_t Vc = coarse_classes, Vf = fine_classes;
    return {{g.slice(out, 0, Vc), g.sigmoid(g.slice(out, Vc, 1))},
            {g.slice(out, Vc + 1, Vf), g.sigmoid(g.slice(out, Vc + 1 + Vf, 1))}};
  }

  Prediction predict_heads(Graph& g, const State& st) const {
    const Outputs o = heads(g, st);
    auto convert = [&](const HeadOutput& h) {
      HeadPrediction p;
      auto lv = g.value(h.logits);
      p.logits.assign(lv.begin(), lv.end());
      p.duration = std::clamp(g.scalar_value(h.duration), kMinDuration, 1.0);
      return p;
    };
    return {convert(o.coarse), convert(o.fine)};
  }
};

}  // namespace hera
