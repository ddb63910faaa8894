// SPDX-License-Identifier: Apache-2.0
//
// Annotation records, vocabularies and cross-validation folds.
//
// Canonical format: one JSON object per line,
//   {"video_id": "...", "person_id": "...", "task": "...", "total_frames": N,
//    "coarse": [[label, start, end], ...],
//    "fine":   [[label, start, end, parent], ...]}
// with 0-based half-open frame intervals and `parent` indexing `coarse`.
// Relative durations are derived from frames at load time.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hera/errors.hpp"
#include "hera/hierarchy.hpp"
#include "hera/optim.hpp"

namespace hera {

struct AnnotatedSegment {
  std::string label;
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t parent = 0;  // fine level only

  bool operator==(const AnnotatedSegment&) const = default;
};

struct AnnotationRecord {
  std::string video_id;
  std::string person_id;
  std::string task;
  std::size_t total_frames = 0;
  std::vector<AnnotatedSegment> coarse;
  std::vector<AnnotatedSegment> fine;

  bool operator==(const AnnotationRecord&) const = default;
};

/// Sorted label list with the reverse map.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const std::set<std::string>& labels) : names_(labels.begin(), labels.end()) {
    for (std::size_t i = 0; i < names_.size(); ++i) ids_[names_[i]] = i;
  }
  explicit Vocabulary(std::vector<std::string> names) : Vocabulary(std::set<std::string>(names.begin(), names.end())) {}

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  bool contains(const std::string& label) const { return ids_.count(label) != 0; }

  ClassId id(const std::string& label) const {
    auto it = ids_.find(label);
    if (it == ids_.end()) throw VocabularyError("unknown label '" + label + "'");
    return it->second;
  }

  const std::string& name(ClassId id) const {
    if (id >= names_.size()) throw VocabularyError("class id " + std::to_string(id) + " outside vocabulary");
    return names_[id];
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  bool operator==(const Vocabulary& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, ClassId> ids_;
};

struct Vocabularies {
  Vocabulary tasks;
  Vocabulary coarse;
  Vocabulary fine;

  bool operator==(const Vocabularies&) const = default;
};

inline Vocabularies build_vocabularies(const std::vector<AnnotationRecord>& records) {
  std::set<std::string> t, c, f;
  for (const auto& r : records) {
    t.insert(r.task);
    for (const auto& s : r.coarse) c.insert(s.label);
    for (const auto& s : r.fine) f.insert(s.label);
  }
  return {Vocabulary(t), Vocabulary(c), Vocabulary(f)};
}

/// Empty string when the record is well formed, otherwise the first problem.
inline std::string check_record(const AnnotationRecord& r) {
  auto at = [](const char* level, std::size_t i) { return std::string(" at ") + level + "[" + std::to_string(i) + "]"; };
  if (r.total_frames == 0) return "total_frames is zero";
  if (r.coarse.empty()) return "no coarse segments";
  if (r.fine.empty()) return "no fine segments";
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < r.coarse.size(); ++i) {
    const auto& s = r.coarse[i];
    if (s.start >= s.end) return "empty or reversed interval" + at("coarse", i);
    if (s.start != cursor) return (s.start < cursor ? "overlap" : "gap") + at("coarse", i);
    cursor = s.end;
  }
  if (cursor != r.total_frames) return "coarse segments do not end at total_frames";
  std::vector<std::size_t> child_count(r.coarse.size(), 0);
  std::size_t prev_parent = 0;
  for (std::size_t j = 0; j < r.fine.size(); ++j) {
    const auto& s = r.fine[j];
    if (s.start >= s.end) return "empty or reversed interval" + at("fine", j);
    if (s.parent >= r.coarse.size()) return "parent index out of range" + at("fine", j);
    if (j > 0 && s.parent < prev_parent) return "fine segments out of parent order" + at("fine", j);
    const auto& p = r.coarse[s.parent];
    if (s.start < p.start || s.end > p.end) return "fine segment not nested in its parent" + at("fine", j);
    const std::size_t expected = child_count[s.parent] == 0 ? p.start : r.fine[j - 1].end;
    if (s.start != expected) return (s.start < expected ? "overlap" : "gap") + at("fine", j);
    ++child_count[s.parent];
    prev_parent = s.parent;
  }
  for (std::size_t i = 0; i < r.coarse.size(); ++i) {
    if (child_count[i] == 0) return "coarse segment without fine children" + at("coarse", i);
  }
  for (std::size_t j = 0; j < r.fine.size(); ++j) {
    const bool last_child = j + 1 == r.fine.size() || r.fine[j + 1].parent != r.fine[j].parent;
    if (last_child && r.fine[j].end != r.coarse[r.fine[j].parent].end) {
      return "fine children do not cover their parent" + at("coarse", r.fine[j].parent);
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// canonical JSONL

inline std::string format_record(const AnnotationRecord& r) {
  nlohmann::ordered_json j;
  j["video_id"] = r.video_id;
  j["person_id"] = r.person_id;
  j["task"] = r.task;
  j["total_frames"] = r.total_frames;
  j["coarse"] = nlohmann::ordered_json::array();
  for (const auto& s : r.coarse) j["coarse"].push_back({s.label, s.start, s.end});
  j["fine"] = nlohmann::ordered_json::array();
  for (const auto& s : r.fine) j["fine"].push_back({s.label, s.start, s.end, s.parent});
  return j.dump();
}

inline AnnotationRecord parse_record(const std::string& line, std::size_t line_no) {
  auto fail = [&](const std::string& what) -> FormatError { return FormatError(what, line_no); };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw fail("record is not an object");
  AnnotationRecord r;
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw fail(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  auto text = [&](const char* key) {
    const auto& v = field(key);
    if (!v.is_string()) throw fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  };
  auto count = [&](const nlohmann::json& v, const std::string& what) {
    if (!v.is_number_unsigned()) throw fail(what + " must be a non-negative integer");
    return v.get<std::size_t>();
  };
  r.video_id = text("video_id");
  r.person_id = text("person_id");
  r.task = text("task");
  r.total_frames = count(field("total_frames"), "total_frames");
  auto segments = [&](const char* key, std::size_t arity) {
    const auto& v = field(key);
    if (!v.is_array()) throw fail(std::string("field '") + key + "' must be an array");
    std::vector<AnnotatedSegment> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& e = v[i];
      const std::string where = std::string(key) + "[" + std::to_string(i) + "]";
      if (!e.is_array() || e.size() != arity) {
        throw fail(where + " must have " + std::to_string(arity) + " elements");
      }
      if (!e[0].is_string()) throw fail(where + " label must be a string");
      AnnotatedSegment s;
      s.label = e[0].get<std::string>();
      s.start = count(e[1], where + " start");
      s.end = count(e[2], where + " end");
      if (arity == 4) s.parent = count(e[3], where + " parent");
      out.push_back(std::move(s));
    }
    return out;
  };
  r.coarse = segments("coarse", 3);
  r.fine = segments("fine", 4);
  return r;
}

struct Rejection {
  std::size_t line = 0;
  std::string video_id;
  std::string reason;
};

struct AnnotationSet {
  std::vector<AnnotationRecord> records;
  std::vector<Rejection> rejected;
  Vocabularies vocab;

  std::size_t coarse_segments() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.coarse.size();
    return n;
  }
  std::size_t fine_segments() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.fine.size();
    return n;
  }
};

/// Malformed lines raise FormatError; records that parse but break the
/// interval invariants are listed in `rejected`. Blank lines are skipped.
inline AnnotationSet parse_annotations(std::istream& in) {
  AnnotationSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AnnotationRecord r = parse_record(line, line_no);
    const std::string problem = check_record(r);
    if (!problem.empty()) {
      set.rejected.push_back({line_no, r.video_id, problem});
      continue;
    }
    set.records.push_back(std::move(r));
  }
  set.vocab = build_vocabularies(set.records);
  return set;
}

inline AnnotationSet parse_annotations_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open annotation file '" + path.string() + "'", 0);
  return parse_annotations(in);
}

inline void write_annotations(std::ostream& out, const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records) out << format_record(r) << '\n';
}

// ---------------------------------------------------------------------------
// conversion to hierarchies

struct Video {
  std::string video_id;
  std::string person_id;
  ActivityHierarchy hierarchy;
};

inline ActivityHierarchy to_hierarchy(const AnnotationRecord& r, const Vocabularies& v) {
  const std::string problem = check_record(r);
  if (!problem.empty()) throw ContractError("to_hierarchy(" + r.video_id + "): " + problem);
  ActivityHierarchy h;
  h.task_id = v.tasks.id(r.task);
  h.total_frames = r.total_frames;
  h.levels.resize(2);
  const double total = static_cast<double>(r.total_frames);
  for (const auto& s : r.coarse) {
    h.levels[kCoarse].segments.push_back({v.coarse.id(s.label), static_cast<double>(s.end - s.start) / total});
  }
  for (const auto& s : r.fine) {
    const auto& p = r.coarse[s.parent];
    h.levels[kFine].segments.push_back(
        {v.fine.id(s.label), static_cast<double>(s.end - s.start) / static_cast<double>(p.end - p.start)});
    h.levels[kFine].parent_index.push_back(s.parent);
  }
  return h;
}

/// Frame-level record of a hierarchy (largest-remainder frame spans).
inline AnnotationRecord to_record(const ActivityHierarchy& h, const Vocabularies& v, std::string video_id,
                                  std::string person_id) {
  AnnotationRecord r;
  r.video_id = std::move(video_id);
  r.person_id = std::move(person_id);
  r.task = v.tasks.name(h.task_id);
  r.total_frames = h.total_frames;
  const auto spans = frame_spans(h);
  std::size_t at = 0;
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < h.coarse().size(); ++i) {
    starts.push_back(at);
    r.coarse.push_back({v.coarse.name(h.coarse().segments[i].label), at, at + spans[kCoarse][i], 0});
    at += spans[kCoarse][i];
  }
  at = 0;
  for (std::size_t j = 0; j < h.fine().size(); ++j) {
    const std::size_t p = h.fine().parent_index[j];
    if (j == 0 || p != h.fine().parent_index[j - 1]) at = starts[p];
    r.fine.push_back({v.fine.name(h.fine().segments[j].label), at, at + spans[kFine][j], p});
    at += spans[kFine][j];
  }
  return r;
}

inline std::vector<Video> to_videos(const std::vector<AnnotationRecord>& records, const Vocabularies& v) {
  std::vector<Video> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.video_id, r.person_id, to_hierarchy(r, v)});
  return out;
}

// ---------------------------------------------------------------------------
// Breakfast-style directories

namespace detail {

/// Lines "start-end label" with 1-based inclusive frames.
inline std::vector<AnnotatedSegment> read_interval_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'", 0);
  std::vector<AnnotatedSegment> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string range, label;
    ss >> range >> label;
    const auto dash = range.find('-');
    if (dash == std::string::npos || label.empty()) {
      throw FormatError(path.filename().string() + ": expected 'start-end label'", line_no);
    }
    AnnotatedSegment s;
    try {
      const long long a = std::stoll(range.substr(0, dash));
      const long long b = std::stoll(range.substr(dash + 1));
      if (a < 1 || b < a) throw std::invalid_argument("range");
      s.start = static_cast<std::size_t>(a - 1);
      s.end = static_cast<std::size_t>(b);
    } catch (const std::logic_error&) {
      throw FormatError(path.filename().string() + ": bad frame range '" + range + "'", line_no);
    }
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace detail

/// Reads a directory with `coarse/` and `fine/` subdirectories holding one
/// file per video (same file name in both). File stems look like
/// `P03_cam01_P03_cereals`: the first token is the person, the last the
/// task. Each fine segment is assigned to the coarse segment containing
/// it; a fine segment crossing a coarse boundary rejects the video.
inline AnnotationSet parse_breakfast_dir(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path coarse_dir = root / "coarse";
  const fs::path fine_dir = root / "fine";
  if (!fs::is_directory(coarse_dir) || !fs::is_directory(fine_dir)) {
    throw FormatError("'" + root.string() + "' lacks coarse/ and fine/ subdirectories", 0);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(coarse_dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  AnnotationSet set;
  std::size_t index = 0;
  for (const auto& cf : files) {
    ++index;
    AnnotationRecord r;
    r.video_id = cf.stem().string();
    const auto first = r.video_id.find('_');
    const auto last = r.video_id.rfind('_');
    r.person_id = r.video_id.substr(0, first);
    r.task = last == std::string::npos ? r.video_id : r.video_id.substr(last + 1);
    const fs::path ff = fine_dir / cf.filename();
    if (!fs::exists(ff)) {
      set.rejected.push_back({index, r.video_id, "no fine annotation file"});
      continue;
    }
    r.coarse = detail::read_interval_file(cf);
    r.fine = detail::read_interval_file(ff);
    r.total_frames = r.coarse.empty() ? 0 : r.coarse.back().end;
    std::string problem;
    for (std::size_t j = 0; j < r.fine.size() && problem.empty(); ++j) {
      auto& s = r.fine[j];
      auto it = std::find_if(r.coarse.begin(), r.coarse.end(),
                             [&](const AnnotatedSegment& c) { return s.start >= c.start && s.end <= c.end; });
      if (it == r.coarse.end()) {
        problem = "fine segment " + std::to_string(j) + " crosses a coarse boundary";
      } else {
        s.parent = static_cast<std::size_t>(it - r.coarse.begin());
      }
    }
    if (problem.empty()) problem = check_record(r);
    if (!problem.empty()) {
      set.rejected.push_back({index, r.video_id, problem});
      continue;
    }
    set.records.push_back(std::move(r));
  }
  set.vocab = build_vocabularies(set.records);
  return set;
}

enum class AnnotationFormat : std::uint8_t { Canonical, Breakfast };

inline AnnotationSet load_annotations(const std::filesystem::path& path, AnnotationFormat format) {
  return format == AnnotationFormat::Canonical ? parse_annotations_file(path) : parse_breakfast_dir(path);
}

// ---------------------------------------------------------------------------
// leave-persons-out folds

struct Fold {
  std::vector<std::string> train;  // training persons, validation person excluded
  std::string validation;          // empty when a fold has a single training person
  std::vector<std::string> test;
};

/// Fisher-Yates with the library's own uniform draw, so the permutation
/// does not depend on the standard library implementation.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

/// Persons are shuffled by seed and cut into `n_folds` contiguous blocks of
/// near-equal size. Each fold tests on one block; the first remaining person
/// in shuffled order validates.
inline std::vector<Fold> make_cv_splits(const std::vector<std::string>& person_ids, std::size_t n_folds,
                                        std::uint64_t seed) {
  std::set<std::string> distinct(person_ids.begin(), person_ids.end());
  if (n_folds < 2) throw ContractError("make_cv_splits: need at least 2 folds");
  if (distinct.size() < n_folds) {
    throw ContractError("make_cv_splits: " + std::to_string(distinct.size()) + " persons for " +
                        std::to_string(n_folds) + " folds");
  }
  std::vector<std::string> order(distinct.begin(), distinct.end());
  seeded_shuffle(order, seed);
  const std::size_t n = order.size();
  std::vector<std::size_t> bounds(n_folds + 1, 0);
  for (std::size_t f = 0; f <= n_folds; ++f) bounds[f] = f * n / n_folds;
  std::vector<Fold> folds(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_test = i >= bounds[f] && i < bounds[f + 1];
      if (in_test) {
        folds[f].test.push_back(order[i]);
      } else if (folds[f].validation.empty() && n - (bounds[f + 1] - bounds[f]) > 1) {
        folds[f].validation = order[i];
      } else {
        folds[f].train.push_back(order[i]);
      }
    }
  }
  return folds;
}

inline std::vector<Fold> make_cv_splits(const std::vector<AnnotationRecord>& records, std::size_t n_folds,
                                        std::uint64_t seed) {
  std::vector<std::string> persons;
  for (const auto& r : records) persons.push_back(r.person_id);
  return make_cv_splits(persons, n_folds, seed);
}

}  // namespace hera
