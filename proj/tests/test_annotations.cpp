// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "hera/annotations.hpp"
#include "support.hpp"

using namespace hera;
namespace fs = std::filesystem;

namespace {

// Two coarse activities over 100 frames with two fine children each.
AnnotationRecord fixture() {
  AnnotationRecord r;
  r.video_id = "P01_cam01_P01_tea";
  r.person_id = "P01";
  r.task = "tea";
  r.total_frames = 100;
  r.coarse = {{"boil", 0, 40, 0}, {"pour", 40, 100, 0}};
  r.fine = {{"fill", 0, 10, 0}, {"heat", 10, 40, 0}, {"take_cup", 40, 70, 1}, {"pour_water", 70, 100, 1}};
  return r;
}

AnnotationSet parse(const std::string& text) {
  std::istringstream in(text);
  return parse_annotations(in);
}

std::size_t format_error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const FormatError& e) {
    return e.line();
  }
  return 0;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("hera_ann_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

TEST(Jsonl, RoundTripIsIdentity) {
  std::ostringstream out;
  write_annotations(out, {fixture(), fixture()});
  const AnnotationSet set = parse(out.str());
  ASSERT_EQ(set.records.size(), 2u);
  EXPECT_EQ(set.records[0], fixture());
  EXPECT_TRUE(set.rejected.empty());
  EXPECT_EQ(set.coarse_segments(), 4u);
  EXPECT_EQ(set.fine_segments(), 8u);
  std::ostringstream again;
  write_annotations(again, set.records);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Jsonl, VocabulariesAreSorted) {
  const AnnotationSet set = parse(format_record(fixture()) + "\n");
  EXPECT_EQ(set.vocab.coarse.names(), (std::vector<std::string>{"boil", "pour"}));
  EXPECT_EQ(set.vocab.fine.names(), (std::vector<std::string>{"fill", "heat", "pour_water", "take_cup"}));
  EXPECT_EQ(set.vocab.fine.id("heat"), 1u);
  EXPECT_THROW(set.vocab.fine.id("stir"), VocabularyError);
  EXPECT_THROW(set.vocab.tasks.name(1), VocabularyError);
}

TEST(Jsonl, EmptyInputGivesEmptySet) {
  const AnnotationSet set = parse("");
  EXPECT_TRUE(set.records.empty());
  EXPECT_TRUE(set.rejected.empty());
  EXPECT_TRUE(set.vocab.fine.empty());
  EXPECT_TRUE(parse("\n  \n").records.empty());
}

TEST(Jsonl, MalformedLineReportsLineNumber) {
  const std::string good = format_record(fixture()) + "\n";
  EXPECT_EQ(format_error_line(good + "\n{not json\n"), 3u);
  EXPECT_EQ(format_error_line("[1,2]\n"), 1u);
  EXPECT_EQ(format_error_line(good + R"({"video_id":"v"})" + "\n"), 2u);
  std::string bad_arity = good;
  const auto pos = bad_arity.find(",0]");  // drop the parent index of the first fine segment
  bad_arity.erase(pos, 2);
  EXPECT_EQ(format_error_line(good + bad_arity), 2u);
}

TEST(Jsonl, BrokenRecordsAreRejectedWithReason) {
  auto reason = [](auto mutate) {
    AnnotationRecord r = fixture();
    mutate(r);
    return check_record(r);
  };
  EXPECT_EQ(reason([](AnnotationRecord&) {}), "");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.total_frames = 0; }), "total_frames is zero");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.coarse[1].start = 45; }), "gap at coarse[1]");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.coarse[1].start = 35; }), "overlap at coarse[1]");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.total_frames = 120; }), "coarse segments do not end at total_frames");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.fine[1].end = 35; }), "fine children do not cover their parent at coarse[0]");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.fine[2].parent = 5; }), "parent index out of range at fine[2]");
  EXPECT_EQ(reason([](AnnotationRecord& r) { r.fine[3].start = r.fine[3].end; }), "empty or reversed interval at fine[3]");

  std::ostringstream text;
  AnnotationRecord bad = fixture();
  bad.video_id = "broken";
  bad.coarse[1].start = 45;
  write_annotations(text, {fixture(), bad});
  const AnnotationSet set = parse(text.str());
  EXPECT_EQ(set.records.size(), 1u);
  ASSERT_EQ(set.rejected.size(), 1u);
  EXPECT_EQ(set.rejected[0].line, 2u);
  EXPECT_EQ(set.rejected[0].video_id, "broken");
  EXPECT_EQ(set.rejected[0].reason, "gap at coarse[1]");
}

TEST(Jsonl, HierarchyConversionRoundTrips) {
  const AnnotationSet set = parse(format_record(fixture()) + "\n");
  const ActivityHierarchy h = to_hierarchy(set.records[0], set.vocab);
  EXPECT_TRUE(validate(h).ok());
  EXPECT_DOUBLE_EQ(h.coarse().segments[0].rel_duration, 0.4);
  EXPECT_DOUBLE_EQ(h.fine().segments[0].rel_duration, 0.25);
  EXPECT_EQ(to_record(h, set.vocab, fixture().video_id, "P01"), fixture());
}

TEST(Breakfast, DirectoryParsing) {
  TempDir dir;
  write_file(dir.path() / "coarse" / "P03_cam01_P03_cereals.txt", "1-30 SIL\n31-100 take_bowl\n");
  write_file(dir.path() / "fine" / "P03_cam01_P03_cereals.txt", "1-30 SIL\n31-60 reach\n61-100 grasp\n");
  write_file(dir.path() / "coarse" / "P04_cam01_P04_tea.txt", "1-50 a\n51-80 b\n");
  write_file(dir.path() / "fine" / "P04_cam01_P04_tea.txt", "1-60 x\n61-80 y\n");  // crosses the boundary at 50
  write_file(dir.path() / "coarse" / "P05_cam01_P05_tea.txt", "1-10 a\n");
  const AnnotationSet set = parse_breakfast_dir(dir.path());
  ASSERT_EQ(set.records.size(), 1u);
  const AnnotationRecord& r = set.records[0];
  EXPECT_EQ(r.person_id, "P03");
  EXPECT_EQ(r.task, "cereals");
  EXPECT_EQ(r.total_frames, 100u);
  EXPECT_EQ(r.coarse[1], (AnnotatedSegment{"take_bowl", 30, 100, 0}));
  EXPECT_EQ(r.fine[2], (AnnotatedSegment{"grasp", 60, 100, 1}));
  ASSERT_EQ(set.rejected.size(), 2u);
  EXPECT_EQ(set.rejected[0].reason, "fine segment 0 crosses a coarse boundary");
  EXPECT_EQ(set.rejected[1].reason, "no fine annotation file");
}

TEST(Breakfast, BadRangeAndMissingLayout) {
  TempDir dir;
  EXPECT_THROW(parse_breakfast_dir(dir.path()), FormatError);
  write_file(dir.path() / "coarse" / "P01_x_tea.txt", "1-10 a\n20-5 b\n");
  write_file(dir.path() / "fine" / "P01_x_tea.txt", "1-10 a\n");
  try {
    parse_breakfast_dir(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Folds, FiftyTwoPersonsInFourBlocks) {
  std::vector<std::string> persons;
  for (int i = 0; i < 52; ++i) persons.push_back("P" + std::to_string(i));
  const auto folds = make_cv_splits(persons, 4, 7);
  ASSERT_EQ(folds.size(), 4u);
  std::multiset<std::string> all_test;
  for (const Fold& f : folds) {
    EXPECT_EQ(f.test.size(), 13u);
    all_test.insert(f.test.begin(), f.test.end());
    std::set<std::string> seen(f.test.begin(), f.test.end());
    for (const auto& p : f.train) EXPECT_TRUE(seen.insert(p).second) << p;
    EXPECT_FALSE(f.validation.empty());
    EXPECT_TRUE(seen.insert(f.validation).second);
    EXPECT_EQ(seen.size(), 52u);
  }
  EXPECT_EQ(all_test, std::multiset<std::string>(persons.begin(), persons.end()));
}

TEST(Folds, SeedControlsAssignment) {
  std::vector<std::string> persons;
  for (int i = 0; i < 20; ++i) persons.push_back("P" + std::to_string(i));
  const auto a = make_cv_splits(persons, 4, 1);
  const auto b = make_cv_splits(persons, 4, 1);
  const auto c = make_cv_splits(persons, 4, 2);
  for (std::size_t f = 0; f < 4; ++f) {
    EXPECT_EQ(a[f].test, b[f].test);
    EXPECT_EQ(a[f].validation, b[f].validation);
  }
  bool differs = false;
  for (std::size_t f = 0; f < 4; ++f) differs |= a[f].test != c[f].test;
  EXPECT_TRUE(differs);
}

TEST(Folds, UnevenSplitAndErrors) {
  std::vector<std::string> persons{"a", "b", "c", "d", "e", "a"};
  const auto folds = make_cv_splits(persons, 2, 0);
  EXPECT_EQ(folds[0].test.size() + folds[1].test.size(), 5u);
  EXPECT_THROW(make_cv_splits(persons, 1, 0), ContractError);
  EXPECT_THROW(make_cv_splits(persons, 6, 0), ContractError);
  const auto pair = make_cv_splits(std::vector<std::string>{"a", "b"}, 2, 0);
  EXPECT_TRUE(pair[0].validation.empty());
  EXPECT_EQ(pair[0].train.size(), 1u);
}
