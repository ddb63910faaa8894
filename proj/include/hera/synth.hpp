// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-level activity grammar.
//
// A task expands into an ordered list of coarse activities; each coarse
// activity expands into an ordered list of fine actions. Fine labels are
// shared between coarse activities, so a fine sequence alone does not
// identify the activity it belongs to. Noise: coarse activities after the
// first may be skipped, two adjacent ones may swap, and every duration is
// jittered multiplicatively before renormalization.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hera/annotations.hpp"
#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/optim.hpp"

namespace hera {

struct FineTemplate {
  std::string label;
  double mean = 1.0;  // relative weight inside the parent
};

struct CoarseTemplate {
  std::string label;
  double mean = 1.0;  // relative weight inside the task
  std::vector<FineTemplate> fine;
};

struct TaskGrammar {
  std::string label;
  std::vector<CoarseTemplate> coarse;
};

struct SynthGrammar {
  std::vector<TaskGrammar> tasks;
  double jitter = 0.1;       // standard deviation of the multiplicative duration noise
  double jitter_clip = 0.3;  // noise is clipped to [-clip, clip]
  double skip_prob = 0.1;    // per coarse activity after the first
  double swap_prob = 0.1;    // per video: swap two adjacent non-first activities
  std::size_t min_frames = 600;
  std::size_t max_frames = 1800;
  std::size_t persons = 16;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigurationError("synth grammar: " + what); };
    if (tasks.empty()) fail("no tasks");
    for (const auto& t : tasks) {
      if (t.coarse.empty()) fail("task '" + t.label + "' has no coarse activities");
      for (const auto& c : t.coarse) {
        if (c.fine.empty()) fail("coarse rule '" + c.label + "' in task '" + t.label + "' has no fine actions");
        if (!(c.mean > 0.0)) fail("coarse rule '" + c.label + "' has a non-positive mean");
        for (const auto& f : c.fine) {
          if (!(f.mean > 0.0)) fail("fine action '" + f.label + "' in '" + c.label + "' has a non-positive mean");
        }
      }
    }
    if (!(jitter >= 0.0) || !(jitter_clip >= 0.0 && jitter_clip < 1.0)) fail("jitter must be in [0, 1)");
    if (!(skip_prob >= 0.0 && skip_prob < 1.0) || !(swap_prob >= 0.0 && swap_prob <= 1.0)) {
      fail("noise probabilities out of range");
    }
    if (min_frames == 0 || max_frames < min_frames) fail("bad frame range");
    if (persons == 0) fail("no persons");
  }
};

/// 4 tasks with 3 to 5 coarse activities of 2 to 4 fine actions each.
inline SynthGrammar default_grammar() {
  SynthGrammar g;
  g.tasks = {
      {"coffee",
       {{"prepare-cup", 0.20, {{"take-cup", 0.3}, {"put-plate", 0.7}}},
        {"brew-coffee", 0.45, {{"open-lid", 0.15}, {"pour-water", 0.55}, {"close-lid", 0.3}}},
        {"add-milk", 0.20, {{"open-lid", 0.2}, {"pour-milk", 0.5}, {"stir-mixture", 0.3}}},
        {"clean-up", 0.15, {{"wipe-table", 0.6}, {"wash-hands", 0.4}}}}},
      {"salad",
       {{"wash-produce", 0.20, {{"take-bowl", 0.2}, {"pour-water", 0.3}, {"wash-hands", 0.5}}},
        {"cut-vegetables", 0.35, {{"take-knife", 0.1}, {"cut-fruit", 0.6}, {"put-plate", 0.3}}},
        {"mix-salad", 0.20, {{"pour-milk", 0.2}, {"stir-mixture", 0.8}}},
        {"serve-dish", 0.15, {{"take-bowl", 0.25}, {"put-plate", 0.5}, {"wipe-table", 0.25}}},
        {"clean-up", 0.10, {{"wash-hands", 0.5}, {"wipe-table", 0.5}}}}},
      {"sandwich",
       {{"prepare-bread", 0.30, {{"take-knife", 0.2}, {"cut-fruit", 0.5}, {"put-plate", 0.3}}},
        {"spread-toppings",
         0.45,
         {{"open-lid", 0.1}, {"spread-butter", 0.5}, {"close-lid", 0.1}, {"put-plate", 0.3}}},
        {"clean-up", 0.25, {{"wipe-table", 0.5}, {"wash-hands", 0.5}}}}},
      {"pancake",
       {{"make-batter", 0.30, {{"take-bowl", 0.2}, {"pour-milk", 0.3}, {"stir-mixture", 0.5}}},
        {"heat-pan", 0.15, {{"take-pan", 0.4}, {"spread-butter", 0.6}}},
        {"fry-pancake", 0.35, {{"pour-batter", 0.3}, {"take-pan", 0.2}, {"put-plate", 0.5}}},
        {"clean-up", 0.20, {{"wash-hands", 0.4}, {"wipe-table", 0.6}}}}},
  };
  return g;
}

struct SynthStats {
  std::size_t skippable = 0;  // coarse slots eligible for skipping
  std::size_t skipped = 0;
  std::size_t swaps = 0;
};

struct SynthResult {
  std::vector<AnnotationRecord> records;
  SynthStats stats;
};

/// Box-Muller over the library's uniform draw (platform independent).
inline double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit_uniform(rng);  // (0, 1]
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

namespace detail {

/// Frame apportionment that gives every segment at least one frame.
inline std::vector<std::size_t> positive_spans(const std::vector<double>& weights, std::size_t total) {
  if (total < weights.size()) throw ContractError("synth: too few frames for the segments of a level");
  std::vector<std::size_t> spans = largest_remainder(weights, total);
  for (auto& s : spans) {
    if (s > 0) continue;
    auto donor = std::max_element(spans.begin(), spans.end());
    --*donor;
    s = 1;
  }
  return spans;
}

}  // namespace detail

inline SynthResult synth_generate(const SynthGrammar& grammar, std::size_t n, std::uint64_t seed) {
  grammar.validate();
  std::mt19937_64 rng(seed);
  SynthResult out;
  auto jittered = [&](double mean) {
    const double e = std::clamp(grammar.jitter * standard_normal(rng), -grammar.jitter_clip, grammar.jitter_clip);
    return mean * (1.0 + e);
  };
  auto index_below = [&](std::size_t m) {
    return std::min(static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(m)), m - 1);
  };
  for (std::size_t v = 0; v < n; ++v) {
    const TaskGrammar& task = grammar.tasks[index_below(grammar.tasks.size())];
    std::vector<const CoarseTemplate*> slots{&task.coarse.front()};
    for (std::size_t i = 1; i < task.coarse.size(); ++i) {
      ++out.stats.skippable;
      if (unit_uniform(rng) < grammar.skip_prob) {
        ++out.stats.skipped;
      } else {
        slots.push_back(&task.coarse[i]);
      }
    }
    if (slots.size() >= 3 && unit_uniform(rng) < grammar.swap_prob) {
      const std::size_t i = 1 + index_below(slots.size() - 2);
      std::swap(slots[i], slots[i + 1]);
      ++out.stats.swaps;
    }

    AnnotationRecord r;
    r.task = task.label;
    r.total_frames = grammar.min_frames + index_below(grammar.max_frames - grammar.min_frames + 1);
    const std::size_t person = index_below(grammar.persons) + 1;
    r.person_id = std::string(person < 10 ? "P0" : "P") + std::to_string(person);
    const std::string num = std::to_string(v);
    r.video_id = "synth_" + std::string(num.size() < 5 ? 5 - num.size() : 0, '0') + num + "_" + task.label;

    std::vector<double> cw;
    for (const auto* c : slots) cw.push_back(jittered(c->mean));
    const auto cspans = detail::positive_spans(cw, r.total_frames);
    std::size_t at = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      r.coarse.push_back({slots[i]->label, at, at + cspans[i], 0});
      std::vector<double> fw;
      for (const auto& f : slots[i]->fine) fw.push_back(jittered(f.mean));
      const auto fspans = detail::positive_spans(fw, cspans[i]);
      std::size_t fat = at;
      for (std::size_t k = 0; k < fw.size(); ++k) {
        r.fine.push_back({slots[i]->fine[k].label, fat, fat + fspans[k], i});
        fat += fspans[k];
      }
      at += cspans[i];
    }
    const std::string problem = check_record(r);
    if (!problem.empty()) throw ContractError("synth: generated an invalid record (" + problem + ")");
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace hera
