// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dietweight/domain.hpp"

namespace dietweight {

/// Participant id -> that participant's records sorted by day (days 1..N, no gaps).
using Corpus = std::map<std::string, std::vector<DiaryRecord>>;

// ---------------------------------------------------------------------------
// Diary file: one JSON object per line.
// ---------------------------------------------------------------------------

nlohmann::json record_to_json(const DiaryRecord& record);
DiaryRecord record_from_json(const nlohmann::json& j);

/// Parses a diary stream. Blank lines are skipped. Throws IngestError naming
/// the line for malformed input, and on duplicate or non-consecutive days.
Corpus parse_diary(std::istream& in);
Corpus load_diary(const std::string& path);

/// Writes records in participant order, then day order.
void write_diary(std::ostream& out, const Corpus& corpus);

/// Total record count over all participants.
std::size_t record_count(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Ingredient normalization.
// ---------------------------------------------------------------------------

enum class AffixKind { Prefix, Suffix };

struct CanonicalRule {
  std::string pattern;
  AffixKind kind = AffixKind::Suffix;
  std::string canonical;
};

/// Prefix/suffix merge rules, applied longest pattern first. Construction
/// rejects rule sets whose canonical targets are not fixed points, so a
/// single application is idempotent.
class CanonicalMap {
 public:
  CanonicalMap() = default;
  explicit CanonicalMap(std::vector<CanonicalRule> rules);

  /// Lines `pattern<TAB>prefix|suffix<TAB>canonical`; '#' comments and blank lines skipped.
  static CanonicalMap parse(std::istream& in);
  static CanonicalMap load(const std::string& path);

  /// Canonical token for a phrase, or the phrase itself when no rule matches.
  std::string apply(std::string_view phrase) const;
  bool matches(std::string_view phrase) const;
  bool is_canonical(std::string_view token) const;

  const std::vector<CanonicalRule>& rules() const { return rules_; }

 private:
  const CanonicalRule* find(std::string_view phrase) const;

  std::vector<CanonicalRule> rules_;
};

/// Splits an annotation into canonical lowercase tokens.
///
/// Phrases are split on - / ( ) , 、 ; and trimmed, lowercased and
/// whitespace-collapsed. A phrase matched by the map (or already a canonical
/// target) becomes one token; otherwise it is split into words and each word
/// is mapped. Empty tokens are dropped.
std::vector<std::string> normalize_ingredients(std::string_view raw, const CanonicalMap& map);

/// Re-tokenizes every ingredient entry of every record in place.
void normalize_corpus(Corpus& corpus, const CanonicalMap& map);

// ---------------------------------------------------------------------------
// Vocabulary.
// ---------------------------------------------------------------------------

struct Vocabulary {
  /// Descending count, ties lexicographic.
  std::vector<std::string> tokens;
  std::map<std::string, std::size_t> counts;

  bool contains(std::string_view token) const { return counts.contains(std::string(token)); }
  std::size_t size() const { return tokens.size(); }
};

inline constexpr std::size_t kDefaultMinCount = 5;

Vocabulary build_vocabulary(const std::vector<DiaryRecord>& records,
                            std::size_t min_count = kDefaultMinCount);

/// Counts over the given participants' records only.
Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<std::string>& participants,
                            std::size_t min_count = kDefaultMinCount);

/// Drops ingredient tokens not present in the vocabulary.
void filter_to_vocabulary(Corpus& corpus, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Participant split.
// ---------------------------------------------------------------------------

struct SplitRatios {
  int train = 7;
  int validation = 1;
  int test = 2;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Largest-remainder apportionment of n items; leftover seats go to the
/// largest fractional parts, ties to the earlier member.
std::vector<std::size_t> largest_remainder_sizes(std::size_t n, const std::vector<int>& ratios);

/// Ids are sorted, shuffled with splitmix64-driven Fisher-Yates, then cut by
/// largest-remainder quotas. Each member is returned sorted.
Split split_participants(std::vector<std::string> participants, SplitRatios ratios,
                         std::uint64_t seed);

/// Participants with at least setting.span() days.
std::vector<std::string> eligible_participants(const Corpus& corpus, const HorizonSetting& setting);

// ---------------------------------------------------------------------------
// Windows.
// ---------------------------------------------------------------------------

/// Stride-1 windows; empty when the participant has fewer than L+T days.
std::vector<WindowSample> make_windows(const std::vector<DiaryRecord>& records,
                                       const HorizonSetting& setting);

std::vector<WindowSample> make_windows(const Corpus& corpus,
                                       const std::vector<std::string>& participants,
                                       const HorizonSetting& setting);

/// Closed form: sum over participants of max(0, N - (L+T) + 1).
std::size_t expected_window_count(const Corpus& corpus, const std::vector<std::string>& participants,
                                  const HorizonSetting& setting);

}  // namespace dietweight
