// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "dietweight/error.hpp"
#include "dietweight/ingest.hpp"
#include "dietweight/random.hpp"
#include "support.hpp"

using namespace dietweight;

namespace {

std::string line(const std::string& id, int day, double w) {
  return R"({"participant":")" + id + R"(","day":)" + std::to_string(day) + R"(,"weight_kg":)" +
         std::to_string(w) +
         R"(,"meals":{"breakfast":{"ingredients":["egg","milk"],"images":["k1"]},"lunch":{},"supper":{"ingredients":[]}}})";
}

Corpus parse(const std::string& text) {
  std::istringstream in(text);
  return parse_diary(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const IngestError& e) {
    return e.what();
  }
  return "";
}

CanonicalMap egg_map() { return CanonicalMap({{"eggs", AffixKind::Suffix, "egg"}}); }

// Hand-rolled version of the stated procedure: split on the separator set,
// trim, lowercase, split words. No map.
std::vector<std::string> oracle_split(const std::string& raw) {
  std::string s = raw;
  for (char& c : s) {
    if (std::string("-/(),;").find(c) != std::string::npos) c = ' ';
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : ",") + t;
  return out;
}

}  // namespace

TEST(ParseDiary, TwoLinesOneParticipant) {
  const Corpus c = parse(line("p001", 1, 70.5) + "\n" + line("p001", 2, 70.25) + "\n");
  ASSERT_EQ(c.size(), 1u);
  const auto& r = c.at("p001");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].meal(MealSlot::Breakfast).ingredients, (std::vector<std::string>{"egg", "milk"}));
  EXPECT_EQ(r[0].meal(MealSlot::Breakfast).image_keys, (std::vector<std::string>{"k1"}));
  EXPECT_TRUE(r[1].meal(MealSlot::Lunch).ingredients.empty());
  EXPECT_DOUBLE_EQ(r[1].weight_kg, 70.25);
}

TEST(ParseDiary, SortsDaysAndSkipsBlankLines) {
  const Corpus c = parse(line("p002", 2, 60) + "\n\n" + line("p002", 1, 61) + "\n");
  EXPECT_EQ(c.at("p002").front().day, 1);
}

TEST(ParseDiary, DuplicateDay) {
  EXPECT_NE(error_of(line("p001", 1, 70) + "\n" + line("p001", 2, 70) + "\n" + line("p001", 3, 70) + "\n" +
                     line("p001", 3, 70))
                .find("duplicate day 3"),
            std::string::npos);
}

TEST(ParseDiary, GapNamesMissingDay) {
  EXPECT_NE(error_of(line("p001", 1, 70) + "\n" + line("p001", 2, 70) + "\n" + line("p001", 4, 70)).find("gap at day 3"),
            std::string::npos);
}

TEST(ParseDiary, MalformedLineNamesLineNumber) {
  EXPECT_NE(error_of(line("p001", 1, 70) + "\n{not json\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of(line("p001", 1, 10.0)).find("weight out of range"), std::string::npos);
  EXPECT_NE(error_of(R"({"participant":"p","day":1,"weight_kg":70,"meals":{"breakfast":{},"lunch":{}}})")
                .find("slot absent"),
            std::string::npos);
}

TEST(ParseDiary, RoundTrip) {
  Corpus c;
  auto r = dwtest::make_record("p9", 1, 81.125, {"a", "a"}, {}, {"b"});
  r.meals[MealSlot::Lunch].image_keys = {"img_1", "img_2"};
  c["p9"] = {r, dwtest::make_record("p9", 2, 80.0)};
  std::stringstream ss;
  write_diary(ss, c);
  EXPECT_EQ(parse_diary(ss), c);
  EXPECT_EQ(record_from_json(record_to_json(r)), r);
}

TEST(Normalize, PhraseRuleMergesEggs) {
  EXPECT_EQ(normalize_ingredients("boiled eggs / milk", egg_map()), (std::vector<std::string>{"egg", "milk"}));
}

TEST(Normalize, EmptyInput) { EXPECT_TRUE(normalize_ingredients("", egg_map()).empty()); }

TEST(Normalize, MatchesHandSplitWithoutRules) {
  EXPECT_EQ(normalize_ingredients("Rice(fried)", CanonicalMap{}), (std::vector<std::string>{"rice", "fried"}));
  for (const std::string raw : {"  Tofu ; GREEN  beans", "a-b/c(d),e", "x\xE3\x80\x81y", "()", " Soy   Milk "}) {
    auto expected = oracle_split(raw);
    if (raw.find("\xE3\x80\x81") != std::string::npos) expected = {"x", "y"};
    EXPECT_EQ(normalize_ingredients(raw, CanonicalMap{}), expected) << raw;
  }
}

TEST(Normalize, LongestPatternWins) {
  CanonicalMap map({{"egg", AffixKind::Suffix, "egg"}, {"eggplant", AffixKind::Prefix, "eggplant"},
                    {"steamed", AffixKind::Prefix, "steamed dish"}});
  EXPECT_EQ(map.apply("eggplant slices"), "eggplant");
  EXPECT_EQ(map.apply("fried egg"), "egg");
  EXPECT_EQ(normalize_ingredients("steamed fish", map), (std::vector<std::string>{"steamed dish"}));
}

TEST(Normalize, RejectsNonFixedPointTargets) {
  EXPECT_THROW(CanonicalMap({{"fish", AffixKind::Suffix, "seafood"}, {"food", AffixKind::Suffix, "meal"}}), IngestError);
  EXPECT_NO_THROW(CanonicalMap({{"ed", AffixKind::Suffix, "fried"}}));
  EXPECT_THROW(CanonicalMap({{"a/b", AffixKind::Suffix, "ab"}}), IngestError);
}

TEST(Normalize, MapFileFormat) {
  std::istringstream in("# merges\neggs\tsuffix\tegg\nsoy\tprefix\tsoy\n");
  const CanonicalMap map = CanonicalMap::parse(in);
  EXPECT_EQ(map.rules().size(), 2u);
  EXPECT_EQ(normalize_ingredients("Soybean, Scrambled Eggs", map), (std::vector<std::string>{"soy", "egg"}));
  std::istringstream bad("eggs\tinfix\tegg\n");
  EXPECT_THROW(CanonicalMap::parse(bad), IngestError);
}

TEST(Normalize, IdempotentOnFuzzedAnnotations) {
  const CanonicalMap map({{"eggs", AffixKind::Suffix, "egg"},
                          {"rice", AffixKind::Suffix, "rice"},
                          {"green", AffixKind::Prefix, "green vegetable"},
                          {"noodle", AffixKind::Prefix, "noodle"}});
  const std::vector<std::string> words{"boiled", "Eggs", "RICE", "fried", "green", "beans", "noodles",
                                       "milk", "tofu", "soy", "sauce", "egg"};
  const std::vector<std::string> seps{" ", "  ", "-", "/", "(", ")", ",", ";", "\xE3\x80\x81", " / "};
  SplitMix64 rng(2024);
  for (int i = 0; i < 100; ++i) {
    std::string raw;
    const int n = 1 + static_cast<int>(rng() % 7);
    for (int k = 0; k < n; ++k) {
      raw += words[rng() % words.size()];
      raw += seps[rng() % seps.size()];
    }
    const auto once = normalize_ingredients(raw, map);
    EXPECT_EQ(normalize_ingredients(join(once), map), once) << raw;
    for (const auto& t : once) EXPECT_FALSE(t.empty());
  }
}

TEST(Vocabulary, MinCountBoundary) {
  std::vector<DiaryRecord> records;
  // "egg" 5 times, "milk" 4 times, "rice" 6 times.
  for (int d = 1; d <= 6; ++d) {
    std::vector<std::string> b{"rice"};
    if (d <= 5) b.push_back("egg");
    std::vector<std::string> l;
    if (d <= 4) l.push_back("milk");
    records.push_back(dwtest::make_record("p", d, 70, b, l, {}));
  }
  const Vocabulary v = build_vocabulary(records);
  EXPECT_EQ(v.tokens, (std::vector<std::string>{"rice", "egg"}));
  EXPECT_FALSE(v.contains("milk"));
  EXPECT_EQ(v.counts.at("egg"), 5u);
}

TEST(Vocabulary, OrderFreeAndNoOpFilter) {
  auto records = dwtest::make_series("p", std::vector<double>(6, 70.0));
  auto reversed = records;
  std::reverse(reversed.begin(), reversed.end());
  const Vocabulary a = build_vocabulary(records);
  const Vocabulary b = build_vocabulary(reversed);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.size(), 3u);  // rice, egg, milk, each 6 times; ties lexicographic
  EXPECT_EQ(a.tokens, (std::vector<std::string>{"egg", "milk", "rice"}));
}

TEST(Vocabulary, CountsOnlyTrainParticipantsAndFilters) {
  Corpus c;
  c["a"] = dwtest::make_series("a", std::vector<double>(5, 70.0));
  c["b"] = {dwtest::make_record("b", 1, 70, {"kale"}, {}, {})};
  const Vocabulary v = build_vocabulary(c, {"a"});
  EXPECT_FALSE(v.contains("kale"));
  filter_to_vocabulary(c, v);
  EXPECT_TRUE(c.at("b")[0].meal(MealSlot::Breakfast).ingredients.empty());
  EXPECT_EQ(c.at("a")[0].meal(MealSlot::Breakfast).ingredients, (std::vector<std::string>{"rice"}));
}

TEST(Split, LargestRemainderSizes) {
  EXPECT_EQ(largest_remainder_sizes(10, {7, 1, 2}), (std::vector<std::size_t>{7, 1, 2}));
  // 611 * (0.7, 0.1, 0.2) = (427.7, 61.1, 122.2): one leftover seat to the largest fraction.
  EXPECT_EQ(largest_remainder_sizes(611, {7, 1, 2}), (std::vector<std::size_t>{428, 61, 122}));
  // Ties go to the earlier member: 4 * (1/3 each) = 1.33 each, one extra seat.
  EXPECT_EQ(largest_remainder_sizes(4, {1, 1, 1}), (std::vector<std::size_t>{2, 1, 1}));
}

TEST(Split, DisjointCompleteDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 611; ++i) ids.push_back("u" + std::to_string(i));
  const Split s = split_participants(ids, {}, 3);
  EXPECT_EQ(s.train.size(), 428u);
  EXPECT_EQ(s.validation.size(), 61u);
  EXPECT_EQ(s.test.size(), 122u);
  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 611u);
  const Split again = split_participants(ids, {}, 3);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
  auto shuffled = ids;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(split_participants(shuffled, {}, 3).validation, s.validation);
  EXPECT_NE(split_participants(ids, {}, 4).train, s.train);
}

TEST(Split, PinnedPermutation) {
  // Sorted ids, then Fisher-Yates with j = next() % i for i = n..2.
  std::vector<std::string> ids{"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  auto expected = ids;
  SplitMix64 rng(11);
  for (std::size_t i = expected.size(); i > 1; --i) std::swap(expected[i - 1], expected[rng() % i]);
  std::vector<std::string> train(expected.begin(), expected.begin() + 7);
  std::sort(train.begin(), train.end());
  std::vector<std::string> reversed(ids.rbegin(), ids.rend());
  EXPECT_EQ(split_participants(reversed, {}, 11).train, train);
  std::vector<std::string> test(expected.begin() + 8, expected.end());
  std::sort(test.begin(), test.end());
  EXPECT_EQ(split_participants(ids, {}, 11).test, test);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_participants({"a", "b"}, {}, 1), DataError);
  EXPECT_THROW(split_participants({"a", "a", "b"}, {}, 1), DataError);
}

TEST(Windows, CountsAndBoundaries) {
  EXPECT_EQ(make_windows(dwtest::make_series("p", std::vector<double>(10, 70.0)), {3, 3}).size(), 5u);
  EXPECT_TRUE(make_windows(dwtest::make_series("p", std::vector<double>(13, 70.0)), {7, 7}).empty());
  EXPECT_EQ(make_windows(dwtest::make_series("p", std::vector<double>(14, 70.0)), {7, 7}).size(), 1u);
}

TEST(Windows, ConstantSeriesHasZeroDeltas) {
  const auto w = make_windows(dwtest::make_series("p", std::vector<double>(6, 70.0)), {3, 3});
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].future_deltas, (std::vector<double>{0, 0, 0}));
}

TEST(Windows, ContentsAndDeltas) {
  const auto w = make_windows(dwtest::make_series("p", {70, 71, 72, 73.5, 73, 74}), {2, 2});
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[1].history.rows(), 2u);
  EXPECT_EQ(w[1].history.cols(), kDietChannelCount);
  EXPECT_EQ(w[1].history(0, kWeightColumn), 71.0);
  EXPECT_EQ(w[1].history(1, 0), 0.0);
  EXPECT_EQ(w[1].future_weights, (std::vector<double>{73.5, 73}));
  EXPECT_EQ(w[1].future_deltas, (std::vector<double>{1.5, -0.5}));
  EXPECT_EQ(w[1].raw_history_records.size(), 2u);
  EXPECT_EQ(w[1].raw_history_records[0].day, 2);
  EXPECT_EQ(w[1].last_history_weight(), 72.0);
}

TEST(Windows, ClosedFormForAllNamedSettings) {
  Corpus c;
  std::vector<std::string> ids;
  for (int p = 0; p < 25; ++p) {
    const std::string id = "p" + std::to_string(p);
    c[id] = dwtest::make_series(id, std::vector<double>(3 + p, 65.0));
    ids.push_back(id);
  }
  for (const auto& s : named_settings()) {
    std::size_t closed = 0;
    for (int p = 0; p < 25; ++p) closed += static_cast<std::size_t>(std::max(0, 3 + p - s.span() + 1));
    EXPECT_EQ(make_windows(c, ids, s).size(), closed) << s.name();
    EXPECT_EQ(expected_window_count(c, ids, s), closed) << s.name();
    const auto eligible = eligible_participants(c, s);
    for (const auto& id : eligible) EXPECT_GE(static_cast<int>(c.at(id).size()), s.span());
    EXPECT_EQ(eligible.size(), static_cast<std::size_t>(std::min(25, 25 - (s.span() - 3))));
  }
}
