// SPDX-License-Identifier: Apache-2.0
//
// Two-level encoder / refresher / anticipator for activity forecasting.
//
// Coarse and fine GRUs run on their own clocks: the coarse GRU steps once
// per coarse activity, the fine GRU once per fine activity plus one start
// step at the beginning of each parent. Each coarse activity sends a
// downward message (its coarse state before the step, optionally with its
// label embedding) to all of its children; after the last child, the fine
// state travels upward into the coarse step that closes the parent.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hera/autodiff.hpp"
#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/nn.hpp"
#include "hera/optim.hpp"

namespace hera {

struct HeraConfig {
  std::size_t hidden_size = 16;
  std::size_t embed_dim = 8;
  std::size_t mlp_width = 16;
  double lr = 1e-3;
  std::size_t batch_size = 512;
  std::size_t epochs = 20;
  std::size_t splits_per_video = 32;  // observation cuts drawn per training video and epoch
  double min_observe = 0.1;           // training cuts are drawn from U[min_observe, max_observe]
  double max_observe = 0.9;
  std::size_t max_rollout_steps_per_level = 50;
  bool encoder_loss_enabled = true;
  bool cross_level_messages = true;
  bool label_in_downward_msg = true;
  bool freeze_embeddings = false;
  double scheduled_sampling = 0.0;  // probability of feeding back predicted labels in training
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigurationError("HeraConfig: " + what); };
    if (hidden_size == 0 || embed_dim == 0 || mlp_width == 0) fail("layer sizes must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rate must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (splits_per_video == 0) fail("splits_per_video must be positive");
    if (!(min_observe > 0.0 && max_observe < 1.0 && min_observe <= max_observe)) {
      fail("observation range must satisfy 0 < min_observe <= max_observe < 1");
    }
    if (max_rollout_steps_per_level == 0) fail("max_rollout_steps_per_level must be positive");
    if (!(scheduled_sampling >= 0.0 && scheduled_sampling <= 1.0)) fail("scheduled_sampling must lie in [0, 1]");
  }
};

enum class HeraTask : std::size_t {
  EncCoarseLabel,
  EncCoarseDuration,
  EncFineLabel,
  EncFineDuration,
  RefCoarseDuration,
  RefFineDuration,
  AntCoarseLabel,
  AntCoarseDuration,
  AntFineLabel,
  AntFineDuration,
};

inline constexpr std::size_t kHeraTaskCount = 10;

inline const std::vector<std::string>& hera_task_names() {
  static const std::vector<std::string> names = {
      "enc.coarse.label", "enc.coarse.duration", "enc.fine.label", "enc.fine.duration", "ref.coarse.duration",
      "ref.fine.duration", "ant.coarse.label",   "ant.coarse.duration", "ant.fine.label", "ant.fine.duration"};
  return names;
}

/// Per-task loss terms collected during one teacher-forced pass; each task
/// contributes the mean of its terms.
class LossBank {
 public:
  void add(HeraTask t, Var v) { terms_[static_cast<std::size_t>(t)].push_back(v); }

  void add_head(Graph& g, HeraTask label_task, const HeadOutput& out, ClassId label, double duration) {
    add(label_task, nll_loss(g, out.logits, label));
    add(static_cast<HeraTask>(static_cast<std::size_t>(label_task) + 1), mse_loss(g, out.duration, duration));
  }

  std::size_t count(HeraTask t) const { return terms_[static_cast<std::size_t>(t)].size(); }

  std::vector<std::pair<std::string, Var>> means(Graph& g) const {
    std::vector<std::pair<std::string, Var>> out;
    for (std::size_t t = 0; t < kHeraTaskCount; ++t) {
      const auto& v = terms_[t];
      if (v.empty()) continue;
      out.emplace_back(hera_task_names()[t], g.scale(g.sum_all(v), 1.0 / static_cast<double>(v.size())));
    }
    return out;
  }

 private:
  std::array<std::vector<Var>, kHeraTaskCount> terms_;
};

/// Recurrent state handed from one stage to the next.
struct HierState {
  Var h_c;  // coarse state; the refreshed one after refresh()
  Var h_f;  // fine state; the refreshed one after refresh()
  Var message;  // downward message for the remaining children of the activity in progress
  double coarse_acc = 0.0;  // accumulated coarse duration; amended by the refresher
  double fine_acc = 0.0;    // accumulated fine duration inside the activity in progress
  bool coarse_partial = false;
  bool fine_partial = false;
  bool refreshed = false;
  double remaining_coarse = 0.0;
  double remaining_fine = 0.0;
  /// Children of the activity in progress, durations relative to its
  /// estimated span; the interrupted child carries its amended duration.
  std::vector<ActionSegment> children;
};

class HeraModel {
 public:
  struct Refresh {
    Var state;
    Var remaining;  // scalar in [0, 1 - accumulated]
  };

  HeraConfig config;
  std::size_t coarse_classes = 0;
  std::size_t fine_classes = 0;
  EmbeddingTable coarse_labels, fine_labels, coarse_durations, fine_durations;
  GruCell coarse_gru, fine_gru;
  MlpHead coarse_head, fine_head;
  Mlp coarse_refresh_state, coarse_refresh_remaining;
  Mlp fine_refresh_state, fine_refresh_remaining;
  TaskWeights weights;

  HeraModel() = default;
  HeraModel(const HeraConfig& cfg, std::size_t n_coarse, std::size_t n_fine)
      : config(cfg), coarse_classes(n_coarse), fine_classes(n_fine), weights(hera_task_names()) {
    cfg.validate();
    if (n_coarse == 0 || n_fine == 0) throw ConfigurationError("HeraModel: empty vocabulary");
    const std::size_t H = cfg.hidden_size, E = cfg.embed_dim, W = cfg.mlp_width;
    std::uint64_t salt = 100;
    auto seed = [&] { return mix_seed(cfg.seed, salt++); };
    coarse_labels = EmbeddingTable("emb.coarse", n_coarse, E, seed());
    fine_labels = EmbeddingTable("emb.fine", n_fine + 1, E, seed());  // last row: start token
    coarse_durations = EmbeddingTable("emb.coarse_duration", kDurationBins, E, seed());
    fine_durations = EmbeddingTable("emb.fine_duration", kDurationBins, E, seed());
    coarse_gru = GruCell("gru.coarse", 2 * E + H, H, seed());
    fine_gru = GruCell("gru.fine", 2 * E + message_size(), H, seed());
    coarse_head = MlpHead("head.coarse", H, W, n_coarse, seed());
    fine_head = MlpHead("head.fine", H, W, n_fine, seed());
    coarse_refresh_state = Mlp("refresh.coarse.state", {H + E + 2, W, H}, Activation::Tanh, seed());
    coarse_refresh_remaining = Mlp("refresh.coarse.remaining", {H, W, 1}, Activation::Sigmoid, seed());
    fine_refresh_state =
        Mlp("refresh.fine.state", {H + E + 2 + message_size(), W, H}, Activation::Tanh, seed());
    fine_refresh_remaining = Mlp("refresh.fine.remaining", {H, W, 1}, Activation::Sigmoid, seed());
    if (cfg.freeze_embeddings) {
      for (auto* e : {&coarse_labels, &fine_labels, &coarse_durations, &fine_durations}) e->matrix.frozen = true;
    }
  }

  std::size_t message_size() const { return config.hidden_size + (config.label_in_downward_msg ? config.embed_dim : 0); }
  ClassId start_token() const { return fine_classes; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* e : {&coarse_labels, &fine_labels, &coarse_durations, &fine_durations}) out.push_back(&e->matrix);
    auto append = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    append(coarse_gru.parameters());
    append(fine_gru.parameters());
    append(coarse_head.parameters());
    append(fine_head.parameters());
    append(coarse_refresh_state.parameters());
    append(coarse_refresh_remaining.parameters());
    append(fine_refresh_state.parameters());
    append(fine_refresh_remaining.parameters());
    append(weights.parameters());
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const Parameter* p : parameters()) n += p->value.size();
    return n;
  }

  /// Keeps the learned task weights inside their clamp interval.
  void after_step() { weights.clamp(); }

  // -------------------------------------------------------------------------
  // building blocks

  Var downward(Graph& g, Var h_c, ClassId coarse) const {
    if (!config.cross_level_messages) return g.zeros(message_size());
    if (!config.label_in_downward_msg) return h_c;
    return g.concat({h_c, coarse_labels.lookup(g, coarse)});
  }

  Var upward(Graph& g, Var h_f) const { return config.cross_level_messages ? h_f : g.zeros(config.hidden_size); }

  Var coarse_step(Graph& g, Var h, ClassId label, double acc, Var up) const {
    Var x = g.concat({coarse_labels.lookup(g, label), coarse_durations.lookup(g, bin(acc)), up});
    return coarse_gru.step(g, x, h);
  }

  Var fine_step(Graph& g, Var h, ClassId label, double acc, Var message) const {
    Var x = g.concat({fine_labels.lookup(g, label), fine_durations.lookup(g, bin(acc)), message});
    return fine_gru.step(g, x, h);
  }

  Var fine_start(Graph& g, Var h, Var message) const { return fine_step(g, h, start_token(), 0.0, message); }

  Refresh refresh_coarse(Graph& g, Var h, ClassId label, double acc, double partial) const {
    Var in = g.concat({h, coarse_labels.lookup(g, label), g.scalar(acc), g.scalar(partial)});
    Var state = coarse_refresh_state.forward(g, in);
    return {state, g.scale(coarse_refresh_remaining.forward(g, state), 1.0 - acc)};
  }

  Refresh refresh_fine(Graph& g, Var h, ClassId label, double acc, double partial, Var message) const {
    Var in = g.concat({h, fine_labels.lookup(g, label), g.scalar(acc), g.scalar(partial), message});
    Var state = fine_refresh_state.forward(g, in);
    return {state, g.scale(fine_refresh_remaining.forward(g, state), 1.0 - acc)};
  }

  // -------------------------------------------------------------------------
  // training

  /// Teacher-forced loss of one observation split. Uses the ground-truth
  /// future stored in the split as targets and as fed-back inputs (labels
  /// may be replaced by predictions when scheduled sampling is on and an
  /// rng is given).
  Var compute_loss(Graph& g, const ObservationSplit& split, std::mt19937_64* rng = nullptr,
                   std::vector<std::pair<std::string, Var>>* per_task = nullptr) const {
    check_split(split);
    const ActivityHierarchy truth = reassemble(split);
    const LevelSequence& C = truth.coarse();
    const LevelSequence& F = truth.fine();
    const std::vector<double> acc_c = accumulated(C);
    const std::vector<double> acc_f = accumulated(F);
    std::vector<std::size_t> first(C.size() + 1, F.size());
    for (std::size_t j = F.size(); j-- > 0;) first[F.parent_index[j]] = j;
    for (std::size_t i = C.size(); i-- > 0;) first[i] = std::min(first[i], first[i + 1]);
    auto children_end = [&](std::size_t i) { return first[i + 1]; };

    const bool enc = config.encoder_loss_enabled;
    const Interruption& pc = split.partial[kCoarse];
    const Interruption& pf = split.partial[kFine];
    const std::size_t nC = C.size();
    LossBank bank;

    auto feed = [&](ClassId truth_label, const HeadOutput& out) {
      if (rng && config.scheduled_sampling > 0.0 && unit_uniform(*rng) < config.scheduled_sampling) {
        auto v = g.value(out.logits);
        return static_cast<ClassId>(std::max_element(v.begin(), v.end()) - v.begin());
      }
      return truth_label;
    };

    Var h_c = g.zeros(config.hidden_size);
    Var h_f = g.zeros(config.hidden_size);

    // Fine children [first[i], to) of coarse i under `msg`, after the start
    // step. Encoder targets predict the next child of the same parent; the
    // child at `to` is a target only when it is observed (`to_observed`).
    auto encode_children = [&](Var h, std::size_t i, std::size_t to, Var msg, bool to_observed) {
      h = fine_start(g, h, msg);
      for (std::size_t k = first[i]; k < to; ++k) {
        if (enc) bank.add_head(g, HeraTask::EncFineLabel, fine_head.forward(g, h), F.segments[k].label,
                               F.segments[k].rel_duration);
        h = fine_step(g, h, F.segments[k].label, acc_f[k], msg);
      }
      if (enc && to_observed && to < children_end(i)) {
        bank.add_head(g, HeraTask::EncFineLabel, fine_head.forward(g, h), F.segments[to].label,
                      F.segments[to].rel_duration);
      }
      return h;
    };

    for (std::size_t i = 0; i < pc.index; ++i) {
      if (enc && i > 0) {
        bank.add_head(g, HeraTask::EncCoarseLabel, coarse_head.forward(g, h_c), C.segments[i].label,
                      C.segments[i].rel_duration);
      }
      Var msg = downward(g, h_c, C.segments[i].label);
      h_f = encode_children(h_f, i, children_end(i), msg, false);
      h_c = coarse_step(g, h_c, C.segments[i].label, acc_c[i], upward(g, h_f));
    }
    if (enc && pc.present && pc.index > 0) {
      bank.add_head(g, HeraTask::EncCoarseLabel, coarse_head.forward(g, h_c), C.segments[pc.index].label,
                    C.segments[pc.index].rel_duration);
    }

    std::size_t next_coarse = pc.index;
    if (pc.present) {
      const std::size_t ic = pc.index;
      const Refresh rc = refresh_coarse(g, h_c, pc.label, pc.accumulated, pc.partial);
      bank.add(HeraTask::RefCoarseDuration, mse_loss(g, rc.remaining, C.segments[ic].rel_duration - pc.partial));
      Var msg = downward(g, h_c, pc.label);
      h_f = encode_children(h_f, ic, pf.index, msg, pf.present);
      Var msg_ref = downward(g, rc.state, pc.label);
      Var h = h_f;
      std::size_t k = pf.index;
      if (pf.present) {
        const Refresh rf = refresh_fine(g, h_f, pf.label, pf.accumulated, pf.partial, msg_ref);
        bank.add(HeraTask::RefFineDuration, mse_loss(g, rf.remaining, F.segments[k].rel_duration - pf.partial));
        h = fine_step(g, rf.state, pf.label, acc_f[k], msg_ref);
        ++k;
      }
      const bool last_coarse = ic + 1 == nC;
      for (; k < children_end(ic); ++k) {
        const HeadOutput out = fine_head.forward(g, h);
        bank.add_head(g, HeraTask::AntFineLabel, out, F.segments[k].label, F.segments[k].rel_duration);
        if (last_coarse && k + 1 == children_end(ic)) break;
        h = fine_step(g, h, feed(F.segments[k].label, out), acc_f[k], msg_ref);
      }
      if (!last_coarse) h_c = coarse_step(g, rc.state, pc.label, acc_c[ic], upward(g, h));
      h_f = h;
      next_coarse = ic + 1;
    }

    for (std::size_t i = next_coarse; i < nC; ++i) {
      const HeadOutput co = coarse_head.forward(g, h_c);
      bank.add_head(g, HeraTask::AntCoarseLabel, co, C.segments[i].label, C.segments[i].rel_duration);
      const ClassId x = feed(C.segments[i].label, co);
      Var msg = downward(g, h_c, x);
      h_f = fine_start(g, h_f, msg);
      const bool last_coarse = i + 1 == nC;
      for (std::size_t k = first[i]; k < children_end(i); ++k) {
        const HeadOutput out = fine_head.forward(g, h_f);
        bank.add_head(g, HeraTask::AntFineLabel, out, F.segments[k].label, F.segments[k].rel_duration);
        if (last_coarse && k + 1 == children_end(i)) break;
        h_f = fine_step(g, h_f, feed(F.segments[k].label, out), acc_f[k], msg);
      }
      if (!last_coarse) h_c = coarse_step(g, h_c, x, acc_c[i], upward(g, h_f));
    }

    auto terms = bank.means(g);
    if (per_task) *per_task = terms;
    return weighted_total_loss(g, terms, weights, enc);
  }

  // -------------------------------------------------------------------------
  // inference

  /// Runs the encoder over the coarse activities finished at t*.
  HierState encode(Graph& g, const ObservationSplit& split) const {
    check_split(split);
    const LevelSequence& C = split.observed.coarse();
    const LevelSequence& F = split.observed.fine();
    HierState s;
    s.h_c = g.zeros(config.hidden_size);
    s.h_f = g.zeros(config.hidden_size);
    const std::size_t done = split.partial[kCoarse].index;
    std::size_t k = 0;
    for (std::size_t i = 0; i < done; ++i) {
      Var msg = downward(g, s.h_c, C.segments[i].label);
      s.h_f = fine_start(g, s.h_f, msg);
      double a = 0.0;
      for (; k < F.size() && F.parent_index[k] == i; ++k) {
        a += F.segments[k].rel_duration;
        s.h_f = fine_step(g, s.h_f, F.segments[k].label, std::min(a, 1.0), msg);
      }
      s.coarse_acc += C.segments[i].rel_duration;
      s.h_c = coarse_step(g, s.h_c, C.segments[i].label, std::min(s.coarse_acc, 1.0), upward(g, s.h_f));
    }
    s.coarse_acc = std::min(s.coarse_acc, 1.0);
    return s;
  }

  /// Brings the state up to t*: refreshes the coarse activity in progress,
  /// encodes its finished children on the estimated span, then refreshes
  /// the fine activity in progress. Without an interruption at a level the
  /// refresher is the identity and the remaining length is zero.
  HierState refresh(Graph& g, HierState s, const ObservationSplit& split) const {
    const Interruption& pc = split.partial[kCoarse];
    const Interruption& pf = split.partial[kFine];
    s.refreshed = true;
    s.coarse_partial = pc.present;
    if (!pc.present) return s;

    const Refresh rc = refresh_coarse(g, s.h_c, pc.label, pc.accumulated, pc.partial);
    double r = g.scalar_value(rc.remaining);
    if (1.0 - (pc.accumulated + r) < kMinDuration) r = 1.0 - pc.accumulated;
    s.remaining_coarse = r;
    const double span = pc.partial + r;  // estimated coarse span in task fractions

    Var msg = downward(g, s.h_c, pc.label);
    s.h_f = fine_start(g, s.h_f, msg);
    const LevelSequence& F = split.observed.fine();
    std::size_t k = 0;
    while (k < F.size() && F.parent_index[k] < pc.index) ++k;
    double a = 0.0;
    for (double elapsed : split.interrupted_children_elapsed) {
      const double rel = elapsed / span;
      a += rel;
      s.children.push_back({F.segments.at(k).label, rel});
      s.h_f = fine_step(g, s.h_f, F.segments.at(k).label, std::min(a, 1.0), msg);
      ++k;
    }
    s.message = downward(g, rc.state, pc.label);
    s.h_c = rc.state;
    s.coarse_acc = pc.accumulated + r;
    s.fine_acc = std::min(a, 1.0);

    if (pf.present) {
      const double partial = pf.elapsed / span;
      const double acc = std::min(pf.parent_elapsed / span, 1.0);
      const Refresh rf = refresh_fine(g, s.h_f, pf.label, acc, partial, s.message);
      double rf_value = g.scalar_value(rf.remaining);
      if (1.0 - (acc + rf_value) < kMinDuration) rf_value = 1.0 - acc;
      s.remaining_fine = rf_value;
      s.fine_partial = true;
      s.h_f = rf.state;
      s.fine_acc = std::min(acc + rf_value, 1.0);
      s.children.push_back({pf.label, partial + rf_value});
    }
    return s;
  }

  /// Greedy roll-out from the refreshed state to the end of the task.
  Forecast anticipate(Graph& g, const HierState& s, const ObservationSplit& split) const {
    const LevelSequence& OC = split.observed.coarse();
    const LevelSequence& OF = split.observed.fine();
    const Interruption& pc = split.partial[kCoarse];
    Forecast fc;
    fc.remaining_coarse = s.remaining_coarse;
    fc.remaining_fine = s.remaining_fine;
    ActivityHierarchy& out = fc.hierarchy;
    out.task_id = split.observed.task_id;
    out.total_frames = split.observed.total_frames;
    out.levels.resize(2);
    LevelSequence& oc = out.levels[kCoarse];
    LevelSequence& of = out.levels[kFine];
    for (std::size_t i = 0; i < pc.index; ++i) oc.segments.push_back(OC.segments[i]);
    for (std::size_t k = 0; k < OF.size() && OF.parent_index[k] < pc.index; ++k) {
      of.segments.push_back(OF.segments[k]);
      of.parent_index.push_back(OF.parent_index[k]);
    }

    auto emit_children = [&](std::vector<ActionSegment>& kids) {
      for (auto& c : kids) {
        of.segments.push_back(c);
        of.parent_index.push_back(oc.size() - 1);
      }
    };

    Var h_c = s.h_c;
    Var h_f = s.h_f;
    double A = s.coarse_acc;
    if (s.coarse_partial) {
      std::vector<ActionSegment> kids = s.children;
      Var h = h_f;
      if (s.fine_partial) h = fine_step(g, h_f, kids.back().label, s.fine_acc, s.message);
      h = roll_children(g, h, s.fine_acc, s.message, kids, fc.truncated);
      oc.segments.push_back({pc.label, pc.partial + s.remaining_coarse});
      emit_children(kids);
      if (A < 1.0 - 1e-12) h_c = coarse_step(g, h_c, pc.label, std::min(A, 1.0), upward(g, h));
      h_f = h;
    }

    std::size_t steps = 0;
    while (A < 1.0 - 1e-12) {
      if (steps == config.max_rollout_steps_per_level) {
        fc.truncated = true;
        stretch_last(out, 1.0 - A);
        A = 1.0;
        break;
      }
      const HeadPrediction p = evaluate_head(g, coarse_head, h_c);
      const ClassId x = p.argmax();
      const double d = fit_duration(p.duration, 1.0 - A);
      Var msg = downward(g, h_c, x);
      std::vector<ActionSegment> kids;
      h_f = roll_children(g, fine_start(g, h_f, msg), 0.0, msg, kids, fc.truncated);
      oc.segments.push_back({x, d});
      emit_children(kids);
      A += d;
      ++steps;
      if (A < 1.0 - 1e-12) h_c = coarse_step(g, h_c, x, std::min(A, 1.0), upward(g, h_f));
    }
    normalize(out);
    return fc;
  }

  Forecast predict(const ObservationSplit& split) const {
    Graph g;
    HierState s = refresh(g, encode(g, split), split);
    return anticipate(g, s, split);
  }

  Forecast predict(const ActivityHierarchy& h, double observe) const { return predict(split_at(h, observe)); }

 private:
  static std::size_t bin(double acc) { return duration_bin(std::clamp(acc, 0.0, 1.0)); }

  static void check_split(const ObservationSplit& split) {
    if (split.observed.levels.size() != 2 || split.partial.size() != 2) {
      throw ContractError("HeraModel: expected a two-level observation split");
    }
  }

  Var roll_children(Graph& g, Var h, double acc, Var msg, std::vector<ActionSegment>& kids, bool& truncated) const {
    std::size_t steps = 0;
    while (acc < 1.0 - 1e-12) {
      if (steps == config.max_rollout_steps_per_level && !kids.empty()) {
        truncated = true;
        kids.back().rel_duration += 1.0 - acc;
        break;
      }
      const HeadPrediction p = evaluate_head(g, fine_head, h);
      const ClassId x = p.argmax();
      const double d = fit_duration(p.duration, 1.0 - acc);
      kids.push_back({x, d});
      acc += d;
      ++steps;
      h = fine_step(g, h, x, std::min(acc, 1.0), msg);
    }
    return h;
  }

  /// Lengthens the last coarse activity by `extra`, keeping the absolute
  /// lengths of its existing children; the last child takes the extension.
  static void stretch_last(ActivityHierarchy& h, double extra) {
    LevelSequence& oc = h.levels[kCoarse];
    LevelSequence& of = h.levels[kFine];
    const std::size_t last = oc.size() - 1;
    const double old_span = oc.segments[last].rel_duration;
    const double new_span = old_span + extra;
    oc.segments[last].rel_duration = new_span;
    std::size_t k = of.size();
    while (k > 0 && of.parent_index[k - 1] == last) --k;
    for (std::size_t j = k; j < of.size(); ++j) of.segments[j].rel_duration *= old_span / new_span;
    of.segments.back().rel_duration += extra / new_span;
  }

  /// Removes rounding drift so that every level sums to exactly one.
  static void normalize(ActivityHierarchy& h) {
    auto fix = [](std::vector<ActionSegment>& segs, std::size_t from, std::size_t to) {
      double total = 0.0;
      for (std::size_t i = from; i < to; ++i) total += segs[i].rel_duration;
      if (total > 0.0) {
        for (std::size_t i = from; i < to; ++i) segs[i].rel_duration /= total;
      }
    };
    LevelSequence& oc = h.levels[kCoarse];
    LevelSequence& of = h.levels[kFine];
    fix(oc.segments, 0, oc.size());
    std::size_t i = 0;
    while (i < of.size()) {
      std::size_t j = i;
      while (j < of.size() && of.parent_index[j] == of.parent_index[i]) ++j;
      fix(of.segments, i, j);
      i = j;
    }
  }
};

}  // namespace hera
