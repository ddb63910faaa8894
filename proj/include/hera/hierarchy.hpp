// SPDX-License-Identifier: Apache-2.0
//
// Multi-level activity hierarchies with relative durations.
//
// Level 0 holds coarse activities whose durations are fractions of the whole
// task; every deeper level holds children whose durations are fractions of
// their parent. All roll-out logic in this library assumes two levels
// (coarse and fine), but the types carry a level list.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "hera/errors.hpp"

namespace hera {

using ClassId = std::size_t;

inline constexpr std::size_t kCoarse = 0;
inline constexpr std::size_t kFine = 1;
inline constexpr double kSumTolerance = 1e-6;
inline constexpr double kBoundaryTolerance = 1e-9;

struct ActionSegment {
  ClassId label = 0;
  double rel_duration = 0.0;

  bool operator==(const ActionSegment&) const = default;
};

struct LevelSequence {
  std::vector<ActionSegment> segments;
  /// Parent index per segment at the level above; empty at the top level.
  std::vector<std::size_t> parent_index;

  std::size_t size() const noexcept { return segments.size(); }
  bool operator==(const LevelSequence&) const = default;
};

struct ActivityHierarchy {
  std::vector<LevelSequence> levels;
  ClassId task_id = 0;
  std::size_t total_frames = 0;

  const LevelSequence& coarse() const { return levels.at(kCoarse); }
  const LevelSequence& fine() const { return levels.at(kFine); }
  bool operator==(const ActivityHierarchy&) const = default;
};

inline std::string level_tag(std::size_t level, std::size_t level_count) {
  if (level_count == 2) return level == kCoarse ? "c" : "f";
  return std::to_string(level);
}

// ---------------------------------------------------------------------------
// validation

struct Violation {
  std::size_t level = 0;
  std::size_t index = 0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
  std::string to_string() const {
    std::string out;
    for (const auto& v : violations) out += v.message + "\n";
    return out;
  }
};

inline ValidationReport validate(const ActivityHierarchy& h) {
  ValidationReport report;
  const std::size_t L = h.levels.size();
  auto add = [&](std::size_t level, std::size_t index, const std::string& what) {
    report.violations.push_back(
        {level, index, what + " at (" + level_tag(level, L) + "," + std::to_string(index) + ")"});
  };
  if (L == 0) {
    report.violations.push_back({0, 0, "hierarchy has no levels"});
    return report;
  }
  if (h.total_frames == 0) report.violations.push_back({0, 0, "total_frames is zero"});

  for (std::size_t l = 0; l < L; ++l) {
    const LevelSequence& seq = h.levels[l];
    if (seq.segments.empty()) add(l, 0, "empty level");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const double d = seq.segments[i].rel_duration;
      if (!std::isfinite(d) || d <= 0.0) add(l, i, "non-positive duration");
      if (d > 1.0 + kSumTolerance) add(l, i, "duration exceeds parent");
    }
    if (l == 0) {
      if (!seq.parent_index.empty()) add(l, 0, "top level has parent indices");
      double total = 0.0;
      for (const auto& s : seq.segments) total += s.rel_duration;
      if (!seq.segments.empty() && std::abs(total - 1.0) > kSumTolerance) add(l, 0, "top-level sum != 1");
      continue;
    }
    const LevelSequence& parents = h.levels[l - 1];
    if (seq.parent_index.size() != seq.size()) {
      add(l, 0, "parent index count differs from segment count");
      continue;
    }
    std::vector<double> sums(parents.size(), 0.0);
    std::vector<std::size_t> counts(parents.size(), 0);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const std::size_t p = seq.parent_index[i];
      if (p >= parents.size()) {
        add(l, i, "parent index out of range");
        continue;
      }
      if (i > 0 && p < seq.parent_index[i - 1]) add(l, i, "children not contiguous");
      sums[p] += seq.segments[i].rel_duration;
      counts[p] += 1;
    }
    for (std::size_t p = 0; p < parents.size(); ++p) {
      if (counts[p] == 0) {
        add(l - 1, p, "no children");
      } else if (std::abs(sums[p] - 1.0) > kSumTolerance) {
        add(l - 1, p, "children sum != 1");
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// accumulated durations and absolute timelines

/// Running sum of relative durations within each scope (the whole task at
/// the top level, the parent otherwise).
inline std::vector<double> accumulated(const LevelSequence& seq) {
  if (seq.segments.empty()) throw ContractError("accumulated: empty sequence");
  std::vector<double> out(seq.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!seq.parent_index.empty() && i > 0 && seq.parent_index[i] != seq.parent_index[i - 1]) acc = 0.0;
    acc += seq.segments[i].rel_duration;
    out[i] = acc;
  }
  return out;
}

/// Segment positioned on the task timeline, in fractions of the task.
struct TimedSegment {
  ClassId label = 0;
  double start = 0.0;
  double end = 0.0;

  double length() const noexcept { return end - start; }
};

/// Absolute [start, end) of every segment at every level.
inline std::vector<std::vector<TimedSegment>> absolute_timeline(const ActivityHierarchy& h) {
  std::vector<std::vector<TimedSegment>> out(h.levels.size());
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const LevelSequence& seq = h.levels[l];
    out[l].reserve(seq.size());
    double cursor = 0.0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      double span = 1.0;
      if (l > 0) {
        const TimedSegment& parent = out[l - 1].at(seq.parent_index[i]);
        if (i == 0 || seq.parent_index[i] != seq.parent_index[i - 1]) cursor = parent.start;
        span = parent.length();
      }
      const double len = seq.segments[i].rel_duration * span;
      out[l].push_back({seq.segments[i].label, cursor, cursor + len});
      cursor += len;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// observation split

/// State of one level at the interruption point.
struct Interruption {
  bool present = false;       // a segment straddles t*
  std::size_t index = 0;      // interrupted segment, or first future segment when absent
  ClassId label = 0;          // label of the interrupted segment
  double partial = 0.0;       // observed part, relative to the parent span
  double accumulated = 0.0;   // accumulated duration at t* within the parent
  double elapsed = 0.0;       // observed part in task fractions
  double parent_elapsed = 0.0;  // observed part of the parent in task fractions (t* at the top)
};

/// Observed prefix and ground-truth remainder of a hierarchy cut at t*.
///
/// `observed` holds the finished segments of every level; `future` holds the
/// interrupted segment (with its full duration) and everything after it.
/// Parent indices keep the numbering of the source hierarchy, so
/// concatenating observed and future levels gives the source back.
/// Predictors must only read `observed` and `partial`.
struct ObservationSplit {
  ActivityHierarchy observed;
  std::vector<Interruption> partial;
  ActivityHierarchy future;
  double t_star = 0.0;
  std::size_t observed_frames = 0;
  std::size_t future_frames = 0;
  /// Lengths, in task fractions, of the finished fine children of the
  /// interrupted coarse activity. Observable at t* without knowing the
  /// parent's eventual span.
  std::vector<double> interrupted_children_elapsed;

  std::size_t total_frames() const noexcept { return observed.total_frames; }
};

inline ObservationSplit split_at(const ActivityHierarchy& h, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("split_at: observation fraction must lie in (0, 1)");
  if (h.levels.empty()) throw ContractError("split_at: hierarchy has no levels");
  const auto timeline = absolute_timeline(h);

  ObservationSplit s;
  s.t_star = p;
  s.observed.task_id = s.future.task_id = h.task_id;
  s.observed.total_frames = s.future.total_frames = h.total_frames;
  s.observed_frames = std::min<std::size_t>(
      h.total_frames, static_cast<std::size_t>(std::llround(p * static_cast<double>(h.total_frames))));
  s.future_frames = h.total_frames - s.observed_frames;
  s.observed.levels.resize(h.levels.size());
  s.future.levels.resize(h.levels.size());
  s.partial.resize(h.levels.size());

  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const LevelSequence& seq = h.levels[l];
    const auto& tl = timeline[l];
    std::size_t first_future = seq.size();
    Interruption& in = s.partial[l];
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (tl[i].end <= p + kBoundaryTolerance) continue;  // finished (boundary case included)
      first_future = i;
      if (tl[i].start < p - kBoundaryTolerance) {
        in.present = true;
        in.label = seq.segments[i].label;
        double parent_start = 0.0, parent_span = 1.0;
        if (l > 0) {
          const TimedSegment& parent = timeline[l - 1][seq.parent_index[i]];
          parent_start = parent.start;
          parent_span = parent.length();
        }
        in.elapsed = p - tl[i].start;
        in.parent_elapsed = p - parent_start;
        in.partial = in.elapsed / parent_span;
        in.accumulated = in.parent_elapsed / parent_span;
      }
      break;
    }
    in.index = first_future;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      LevelSequence& dst = i < first_future ? s.observed.levels[l] : s.future.levels[l];
      dst.segments.push_back(seq.segments[i]);
      if (!seq.parent_index.empty()) dst.parent_index.push_back(seq.parent_index[i]);
    }
  }

  if (h.levels.size() > 1 && s.partial[kCoarse].present) {
    const std::size_t parent = s.partial[kCoarse].index;
    const LevelSequence& fine = h.levels[kFine];
    for (std::size_t j = 0; j < s.partial[kFine].index; ++j) {
      if (fine.parent_index[j] == parent) s.interrupted_children_elapsed.push_back(timeline[kFine][j].length());
    }
  }
  return s;
}

/// Inverse of split_at: observed levels followed by future levels.
inline ActivityHierarchy reassemble(const ObservationSplit& s) {
  ActivityHierarchy h;
  h.task_id = s.observed.task_id;
  h.total_frames = s.observed.total_frames;
  h.levels.resize(s.observed.levels.size());
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const auto& a = s.observed.levels[l];
    const auto& b = s.future.levels[l];
    auto& dst = h.levels[l];
    dst.segments = a.segments;
    dst.segments.insert(dst.segments.end(), b.segments.begin(), b.segments.end());
    dst.parent_index = a.parent_index;
    dst.parent_index.insert(dst.parent_index.end(), b.parent_index.begin(), b.parent_index.end());
  }
  return h;
}

// ---------------------------------------------------------------------------
// frame expansion

/// Integer apportionment of `total` units proportional to `weights`
/// (largest-remainder method; ties go to the lower index). The result sums
/// to `total` exactly.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t total) {
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty()) return out;
  double wsum = 0.0;
  for (double w : weights) wsum += std::max(w, 0.0);
  if (!(wsum > 0.0)) {
    out.back() = total;
    return out;
  }
  std::vector<double> rem(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = std::max(weights[i], 0.0) / wsum * static_cast<double>(total);
    const double fl = std::floor(exact);
    out[i] = static_cast<std::size_t>(fl);
    rem[i] = exact - fl;
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) out[order[k % order.size()]] += 1;
  return out;
}

/// Integer frame span of every segment at every level. Top-level spans
/// partition total_frames; children partition their parent's span.
inline std::vector<std::vector<std::size_t>> frame_spans(const ActivityHierarchy& h) {
  std::vector<std::vector<std::size_t>> spans(h.levels.size());
  for (std::size_t l = 0; l < h.levels.size(); ++l) {
    const LevelSequence& seq = h.levels[l];
    if (l == 0) {
      std::vector<double> w;
      for (const auto& s : seq.segments) w.push_back(s.rel_duration);
      spans[l] = largest_remainder(w, h.total_frames);
      continue;
    }
    spans[l].assign(seq.size(), 0);
    std::size_t i = 0;
    while (i < seq.size()) {
      std::size_t j = i;
      std::vector<double> w;
      while (j < seq.size() && seq.parent_index[j] == seq.parent_index[i]) w.push_back(seq.segments[j++].rel_duration);
      const auto part = largest_remainder(w, spans[l - 1].at(seq.parent_index[i]));
      std::copy(part.begin(), part.end(), spans[l].begin() + static_cast<std::ptrdiff_t>(i));
      i = j;
    }
  }
  return spans;
}

struct FrameLabels {
  std::vector<ClassId> labels;
  bool clipped = false;  // requested horizon exceeded total_frames
};

/// Per-frame labels of one level, truncated to `horizon_frames`.
inline FrameLabels to_frame_labels(const ActivityHierarchy& h, std::size_t level, std::size_t horizon_frames) {
  if (level >= h.levels.size()) throw ContractError("to_frame_labels: level out of range");
  FrameLabels out;
  if (horizon_frames > h.total_frames) {
    horizon_frames = h.total_frames;
    out.clipped = true;
  }
  const auto spans = frame_spans(h);
  out.labels.reserve(horizon_frames);
  const LevelSequence& seq = h.levels[level];
  for (std::size_t i = 0; i < seq.size() && out.labels.size() < horizon_frames; ++i) {
    const std::size_t n = std::min(spans[level][i], horizon_frames - out.labels.size());
    out.labels.insert(out.labels.end(), n, seq.segments[i].label);
  }
  return out;
}

struct FrameRun {
  ClassId label = 0;
  std::size_t length = 0;

  bool operator==(const FrameRun&) const = default;
};

/// Maximal runs of equal labels.
inline std::vector<FrameRun> segments_from_frames(const std::vector<ClassId>& frames) {
  std::vector<FrameRun> out;
  for (ClassId c : frames) {
    if (!out.empty() && out.back().label == c) {
      ++out.back().length;
    } else {
      out.push_back({c, 1});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// predictions

/// Output of every predictor: the whole task, observed prefix included, so
/// that frame expansion lines up with the ground truth at t*.
struct Forecast {
  ActivityHierarchy hierarchy;
  bool truncated = false;        // a roll-out hit its step cap
  double remaining_coarse = 0.0;  // estimated remaining length of the interrupted coarse segment
  double remaining_fine = 0.0;    // same for the interrupted fine segment
};

// ---------------------------------------------------------------------------
// building hierarchies from per-level timelines

/// Builds a well-formed two-level hierarchy from independently produced
/// coarse and fine timelines covering [0, 1]. Consecutive equal coarse
/// labels are merged; fine segments that cross a coarse boundary are cut
/// there, and pieces shorter than `min_piece` are dropped into a neighbour.
inline ActivityHierarchy hierarchy_from_timelines(std::vector<TimedSegment> coarse, std::vector<TimedSegment> fine,
                                                  ClassId task_id, std::size_t total_frames,
                                                  double min_piece = 1e-9) {
  auto merge = [](std::vector<TimedSegment>& segs) {
    std::vector<TimedSegment> out;
    for (const auto& s : segs) {
      if (s.end - s.start <= 0.0) continue;
      if (!out.empty() && out.back().label == s.label) {
        out.back().end = s.end;
      } else {
        out.push_back(s);
      }
    }
    segs = std::move(out);
  };
  merge(coarse);
  merge(fine);
  if (coarse.empty() || fine.empty()) throw ContractError("hierarchy_from_timelines: empty timeline");
  coarse.front().start = 0.0;
  coarse.back().end = 1.0;
  fine.front().start = 0.0;
  fine.back().end = 1.0;

  ActivityHierarchy h;
  h.task_id = task_id;
  h.total_frames = total_frames;
  h.levels.resize(2);
  for (const auto& c : coarse) h.levels[kCoarse].segments.push_back({c.label, c.end - c.start});

  std::size_t f = 0;
  for (std::size_t ci = 0; ci < coarse.size(); ++ci) {
    const TimedSegment& c = coarse[ci];
    const double span = c.end - c.start;
    std::vector<ActionSegment> kids;
    while (f < fine.size() && fine[f].start < c.end) {
      const double lo = std::max(fine[f].start, c.start);
      const double hi = std::min(fine[f].end, c.end);
      if (hi - lo > min_piece) {
        if (!kids.empty() && kids.back().label == fine[f].label) {
          kids.back().rel_duration += (hi - lo) / span;
        } else {
          kids.push_back({fine[f].label, (hi - lo) / span});
        }
      } else if (!kids.empty()) {
        kids.back().rel_duration += (hi - lo) / span;
      }
      if (fine[f].end > c.end) break;  // continues into the next parent
      ++f;
    }
    if (kids.empty()) {
      const ClassId label = f < fine.size() ? fine[f].label : fine.back().label;
      kids.push_back({label, 1.0});
    }
    double total = 0.0;
    for (const auto& k : kids) total += k.rel_duration;
    for (auto& k : kids) {
      k.rel_duration /= total;
      h.levels[kFine].segments.push_back(k);
      h.levels[kFine].parent_index.push_back(ci);
    }
  }
  return h;
}

}  // namespace hera
