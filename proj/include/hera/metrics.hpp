// SPDX-License-Identifier: Apache-2.0
//
// Segment and frame metrics for forecast evaluation: IoU, F1@k, mean over
// classes (MoC), mean over frames (MoF) and the segmental edit score.
// All of them operate on the evaluated horizon only; callers cut the
// timelines before passing them in.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <span>
#include <vector>

#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"

namespace hera {

/// Half-open frame interval [start, end) with a label.
struct Segment {
  ClassId label = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  bool operator==(const Segment&) const = default;
};

using SegmentList = std::vector<Segment>;

inline SegmentList segment_list(const std::vector<ClassId>& frames) {
  SegmentList out;
  std::size_t at = 0;
  for (const FrameRun& r : segments_from_frames(frames)) {
    out.push_back({r.label, at, at + r.length});
    at += r.length;
  }
  return out;
}

inline double iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = a.length() + b.length() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

enum class MatchPolicy : std::uint8_t {
  /// Maximum number of one-to-one same-label pairs with IoU >= k.
  Optimal,
  /// Each prediction, in temporal order, takes the unmatched same-label
  /// ground-truth segment of highest IoU (ties: earlier start).
  Greedy,
};

struct F1Result {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t true_positives = 0;
  bool defined = true;  // false when the ground truth is empty
};

namespace detail {

inline std::size_t greedy_matches(const SegmentList& pred, const SegmentList& gt, double k) {
  std::vector<bool> used(gt.size(), false);
  std::size_t tp = 0;
  for (const Segment& p : pred) {
    double best = -1.0;
    std::size_t best_j = gt.size();
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (used[j] || gt[j].label != p.label) continue;
      const double o = iou(p, gt[j]);
      if (o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best_j < gt.size() && best >= k) {
      used[best_j] = true;
      ++tp;
    }
  }
  return tp;
}

/// Kuhn's augmenting-path matching on the eligibility graph.
inline std::size_t optimal_matches(const SegmentList& pred, const SegmentList& gt, double k) {
  std::vector<std::vector<std::size_t>> adj(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (gt[j].label != pred[i].label) continue;
      const double o = iou(pred[i], gt[j]);
      if (o >= k) cand.emplace_back(o, j);
    }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& c : cand) adj[i].push_back(c.second);
  }
  std::vector<std::size_t> owner(gt.size(), pred.size());
  std::vector<char> seen;
  auto augment = [&](auto&& self, std::size_t i) -> bool {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (owner[j] == pred.size() || self(self, owner[j])) {
        owner[j] = i;
        return true;
      }
    }
    return false;
  };
  std::size_t tp = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    seen.assign(gt.size(), 0);
    if (augment(augment, i)) ++tp;
  }
  return tp;
}

}  // namespace detail

inline F1Result f1_from_counts(std::size_t tp, std::size_t n_pred, std::size_t n_gt) {
  F1Result r;
  r.true_positives = tp;
  r.defined = n_gt > 0;
  r.precision = n_pred ? static_cast<double>(tp) / static_cast<double>(n_pred) : 0.0;
  r.recall = n_gt ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline F1Result f1_at_k(const SegmentList& pred, const SegmentList& gt, double k,
                        MatchPolicy policy = MatchPolicy::Optimal) {
  if (!(k > 0.0 && k < 1.0)) throw ContractError("f1_at_k: k must lie in (0, 1)");
  const std::size_t tp =
      policy == MatchPolicy::Optimal ? detail::optimal_matches(pred, gt, k) : detail::greedy_matches(pred, gt, k);
  return f1_from_counts(tp, pred.size(), gt.size());
}

inline F1Result f1_at_k(const std::vector<ClassId>& pred_frames, const std::vector<ClassId>& gt_frames, double k,
                        MatchPolicy policy = MatchPolicy::Optimal) {
  return f1_at_k(segment_list(pred_frames), segment_list(gt_frames), k, policy);
}

inline void check_horizons(const char* what, const std::vector<ClassId>& pred, const std::vector<ClassId>& gt) {
  if (pred.size() != gt.size()) {
    throw ContractError(std::string(what) + ": horizon mismatch (" + std::to_string(pred.size()) + " vs " +
                        std::to_string(gt.size()) + " frames)");
  }
  if (gt.empty()) throw ContractError(std::string(what) + ": empty horizon");
}

/// Mean over frames: fraction of frames with equal labels.
inline double mof(const std::vector<ClassId>& pred, const std::vector<ClassId>& gt) {
  check_horizons("mof", pred, gt);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) ok += pred[i] == gt[i];
  return static_cast<double>(ok) / static_cast<double>(gt.size());
}

/// Per-class frame counts accumulated for MoC.
struct ClassAccuracy {
  std::map<ClassId, std::pair<std::size_t, std::size_t>> per_class;  // correct, total

  void add(const std::vector<ClassId>& pred, const std::vector<ClassId>& gt) {
    check_horizons("moc", pred, gt);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      auto& [correct, total] = per_class[gt[i]];
      correct += pred[i] == gt[i];
      total += 1;
    }
  }

  double mean() const {
    if (per_class.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& [c, ct] : per_class) acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
    return acc / static_cast<double>(per_class.size());
  }
};

/// Mean over classes present in the ground truth of one timeline.
inline double moc(const std::vector<ClassId>& pred, const std::vector<ClassId>& gt) {
  ClassAccuracy a;
  a.add(pred, gt);
  return a.mean();
}

/// MoC over the pooled frames of many timelines.
inline double moc_pooled(std::span<const std::pair<std::vector<ClassId>, std::vector<ClassId>>> pairs) {
  ClassAccuracy a;
  for (const auto& [pred, gt] : pairs) a.add(pred, gt);
  return a.mean();
}

inline std::size_t levenshtein(std::span<const ClassId> a, std::span<const ClassId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// 1 - Levenshtein / max(|pred|, |gt|) over segment label sequences; two
/// empty sequences score 1.
inline double segmental_edit_distance(std::span<const ClassId> pred, std::span<const ClassId> gt) {
  const std::size_t n = std::max(pred.size(), gt.size());
  if (n == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(pred, gt)) / static_cast<double>(n);
}

inline std::vector<ClassId> run_labels(const std::vector<ClassId>& frames) {
  std::vector<ClassId> out;
  for (const FrameRun& r : segments_from_frames(frames)) out.push_back(r.label);
  return out;
}

}  // namespace hera
