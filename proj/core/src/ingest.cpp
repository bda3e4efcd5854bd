// SPDX-License-Identifier: Apache-2.0
#include "dietweight/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Diary file
// ---------------------------------------------------------------------------

json record_to_json(const DiaryRecord& record) {
  json meals = json::object();
  for (const auto& [slot, log] : record.meals) {
    meals[std::string(to_string(slot))] = {{"ingredients", log.ingredients},
                                           {"images", log.image_keys}};
  }
  return json{{"participant", record.participant_id},
              {"day", record.day},
              {"weight_kg", record.weight_kg},
              {"meals", std::move(meals)}};
}

namespace {

std::vector<std::string> string_list(const json& j, const char* what) {
  if (!j.is_array()) throw IngestError(std::string(what) + " must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string()) throw IngestError(std::string(what) + " entries must be strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

DiaryRecord record_from_json(const json& j) {
  if (!j.is_object()) throw IngestError("record must be a JSON object");
  DiaryRecord r;
  if (!j.contains("participant") || !j["participant"].is_string())
    throw IngestError("missing string field 'participant'");
  if (!j.contains("day") || !j["day"].is_number_integer())
    throw IngestError("missing integer field 'day'");
  if (!j.contains("weight_kg") || !j["weight_kg"].is_number())
    throw IngestError("missing numeric field 'weight_kg'");
  if (!j.contains("meals") || !j["meals"].is_object())
    throw IngestError("missing object field 'meals'");
  r.participant_id = j["participant"].get<std::string>();
  r.day = j["day"].get<int>();
  r.weight_kg = j["weight_kg"].get<double>();
  for (const auto& [name, meal] : j["meals"].items()) {
    auto slot = parse_meal_slot(name);
    if (!slot) throw IngestError("unknown meal slot '" + name + "'");
    if (!meal.is_object()) throw IngestError("meal '" + name + "' must be an object");
    MealLog log;
    if (meal.contains("ingredients")) log.ingredients = string_list(meal["ingredients"], "ingredients");
    if (meal.contains("images")) log.image_keys = string_list(meal["images"], "images");
    r.meals[*slot] = std::move(log);
  }
  return r;
}

Corpus parse_diary(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DiaryRecord record;
    try {
      record = record_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw IngestError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const IngestError& e) {
      throw IngestError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto violations = validate_record(record);
    if (!violations.empty()) {
      std::string msg = "line " + std::to_string(line_no) + ": invalid record:";
      for (const auto& v : violations) msg += " " + v + ";";
      throw IngestError(msg);
    }
    corpus[record.participant_id].push_back(std::move(record));
  }

  for (auto& [id, records] : corpus) {
    std::stable_sort(records.begin(), records.end(),
                     [](const DiaryRecord& a, const DiaryRecord& b) { return a.day < b.day; });
    for (std::size_t i = 0; i < records.size(); ++i) {
      const int expected = static_cast<int>(i) + 1;
      if (i > 0 && records[i].day == records[i - 1].day) {
        throw IngestError("duplicate day " + std::to_string(records[i].day) + " for " + id);
      }
      if (records[i].day != expected) {
        throw IngestError("gap at day " + std::to_string(expected) + " for " + id);
      }
    }
  }
  return corpus;
}

Corpus load_diary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open diary file " + path);
  return parse_diary(in);
}

void write_diary(std::ostream& out, const Corpus& corpus) {
  for (const auto& [id, records] : corpus) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
  }
}

std::size_t record_count(const Corpus& corpus) {
  std::size_t n = 0;
  for (const auto& [id, records] : corpus) n += records.size();
  return n;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

/// Trims, lowercases and collapses internal whitespace runs to one space.
std::string clean_phrase(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return lower_ascii(out);
}

std::vector<std::string> split_words(std::string_view phrase) {
  std::vector<std::string> words;
  std::string current;
  for (char c : phrase) {
    if (is_space(c)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

/// Splits on the phrase separators; "、" is the UTF-8 sequence E3 80 81.
std::vector<std::string_view> split_phrases(std::string_view raw) {
  static constexpr std::string_view kIdeographicComma = "\xE3\x80\x81";
  std::vector<std::string_view> phrases;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < raw.size()) {
    std::size_t sep_len = 0;
    const char c = raw[i];
    if (c == '-' || c == '/' || c == '(' || c == ')' || c == ',' || c == ';') {
      sep_len = 1;
    } else if (raw.substr(i, kIdeographicComma.size()) == kIdeographicComma) {
      sep_len = kIdeographicComma.size();
    }
    if (sep_len > 0) {
      phrases.push_back(raw.substr(start, i - start));
      i += sep_len;
      start = i;
    } else {
      ++i;
    }
  }
  phrases.push_back(raw.substr(start));
  return phrases;
}

bool has_separator(std::string_view s) {
  return s.find_first_of("-/(),;") != std::string_view::npos ||
         s.find("\xE3\x80\x81") != std::string_view::npos;
}

}  // namespace

CanonicalMap::CanonicalMap(std::vector<CanonicalRule> rules) : rules_(std::move(rules)) {
  for (auto& rule : rules_) {
    rule.pattern = clean_phrase(rule.pattern);
    rule.canonical = clean_phrase(rule.canonical);
    if (rule.pattern.empty() || rule.canonical.empty()) {
      throw IngestError("canonical rule with empty pattern or target");
    }
    if (has_separator(rule.pattern) || has_separator(rule.canonical)) {
      throw IngestError("canonical rule '" + rule.pattern + "' contains a separator character");
    }
  }
  std::stable_sort(rules_.begin(), rules_.end(), [](const CanonicalRule& a, const CanonicalRule& b) {
    return a.pattern.size() > b.pattern.size();
  });
  for (const auto& rule : rules_) {
    const std::string image = apply(rule.canonical);
    if (image != rule.canonical) {
      throw IngestError("canonical target '" + rule.canonical + "' is rewritten to '" + image +
                        "'; rules must map targets to themselves");
    }
  }
}

CanonicalMap CanonicalMap::parse(std::istream& in) {
  std::vector<CanonicalRule> rules;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw IngestError("canonical map line " + std::to_string(line_no) +
                        ": expected pattern<TAB>kind<TAB>canonical");
    }
    CanonicalRule rule;
    rule.pattern = fields[0];
    if (fields[1] == "prefix") {
      rule.kind = AffixKind::Prefix;
    } else if (fields[1] == "suffix") {
      rule.kind = AffixKind::Suffix;
    } else {
      throw IngestError("canonical map line " + std::to_string(line_no) + ": kind must be prefix or suffix");
    }
    rule.canonical = fields[2];
    rules.push_back(std::move(rule));
  }
  return CanonicalMap(std::move(rules));
}

CanonicalMap CanonicalMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open canonical map " + path);
  return parse(in);
}

const CanonicalRule* CanonicalMap::find(std::string_view phrase) const {
  for (const auto& rule : rules_) {
    if (rule.kind == AffixKind::Prefix ? phrase.starts_with(rule.pattern)
                                       : phrase.ends_with(rule.pattern)) {
      return &rule;
    }
  }
  return nullptr;
}

std::string CanonicalMap::apply(std::string_view phrase) const {
  const CanonicalRule* rule = find(phrase);
  return rule ? rule->canonical : std::string(phrase);
}

bool CanonicalMap::matches(std::string_view phrase) const { return find(phrase) != nullptr; }

bool CanonicalMap::is_canonical(std::string_view token) const {
  return std::any_of(rules_.begin(), rules_.end(),
                     [&](const CanonicalRule& r) { return r.canonical == token; });
}

std::vector<std::string> normalize_ingredients(std::string_view raw, const CanonicalMap& map) {
  std::vector<std::string> tokens;
  for (std::string_view piece : split_phrases(raw)) {
    std::string phrase = clean_phrase(piece);
    if (phrase.empty()) continue;
    if (map.is_canonical(phrase) || map.matches(phrase)) {
      tokens.push_back(map.apply(phrase));
      continue;
    }
    for (auto& word : split_words(phrase)) tokens.push_back(map.apply(word));
  }
  return tokens;
}

void normalize_corpus(Corpus& corpus, const CanonicalMap& map) {
  for (auto& [id, records] : corpus) {
    for (auto& record : records) {
      for (auto& [slot, log] : record.meals) {
        std::vector<std::string> tokens;
        for (const auto& entry : log.ingredients) {
          auto normalized = normalize_ingredients(entry, map);
          tokens.insert(tokens.end(), std::make_move_iterator(normalized.begin()),
                        std::make_move_iterator(normalized.end()));
        }
        log.ingredients = std::move(tokens);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

namespace {

Vocabulary finish_vocabulary(std::map<std::string, std::size_t> counts, std::size_t min_count) {
  Vocabulary vocab;
  for (auto& [token, count] : counts) {
    if (count >= min_count) vocab.counts.emplace(token, count);
  }
  vocab.tokens.reserve(vocab.counts.size());
  for (const auto& [token, count] : vocab.counts) vocab.tokens.push_back(token);
  std::stable_sort(vocab.tokens.begin(), vocab.tokens.end(),
                   [&](const std::string& a, const std::string& b) {
                     return vocab.counts.at(a) > vocab.counts.at(b);
                   });
  return vocab;
}

void count_tokens(const DiaryRecord& record, std::map<std::string, std::size_t>& counts) {
  for (const auto& [slot, log] : record.meals) {
    for (const auto& token : log.ingredients) ++counts[token];
  }
}

}  // namespace

Vocabulary build_vocabulary(const std::vector<DiaryRecord>& records, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) count_tokens(r, counts);
  return finish_vocabulary(std::move(counts), min_count);
}

Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<std::string>& participants,
                            std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& id : participants) {
    auto it = corpus.find(id);
    if (it == corpus.end()) throw DataError("unknown participant " + id);
    for (const auto& r : it->second) count_tokens(r, counts);
  }
  return finish_vocabulary(std::move(counts), min_count);
}

void filter_to_vocabulary(Corpus& corpus, const Vocabulary& vocab) {
  for (auto& [id, records] : corpus) {
    for (auto& record : records) {
      for (auto& [slot, log] : record.meals) {
        std::erase_if(log.ingredients, [&](const std::string& t) { return !vocab.contains(t); });
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

std::vector<std::size_t> largest_remainder_sizes(std::size_t n, const std::vector<int>& ratios) {
  long long total = 0;
  for (int r : ratios) {
    if (r < 0) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (total == 0) throw ConfigError("split ratios must not all be zero");
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<long long> remainders(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const long long scaled = static_cast<long long>(n) * ratios[i];
    sizes[i] = static_cast<std::size_t>(scaled / total);
    remainders[i] = scaled % total;
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(ratios.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % order.size()]];
  return sizes;
}

Split split_participants(std::vector<std::string> participants, SplitRatios ratios,
                         std::uint64_t seed) {
  if (participants.size() < 3) {
    throw DataError("need at least 3 participants to split, got " +
                    std::to_string(participants.size()));
  }
  std::sort(participants.begin(), participants.end());
  if (std::adjacent_find(participants.begin(), participants.end()) != participants.end()) {
    throw DataError("duplicate participant ids in split input");
  }
  seeded_shuffle(participants, seed);
  const auto sizes = largest_remainder_sizes(participants.size(),
                                             {ratios.train, ratios.validation, ratios.test});
  Split split;
  auto begin = participants.begin();
  split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(sizes[0]));
  begin += static_cast<std::ptrdiff_t>(sizes[0]);
  split.validation.assign(begin, begin + static_cast<std::ptrdiff_t>(sizes[1]));
  begin += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(begin, participants.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::string> eligible_participants(const Corpus& corpus, const HorizonSetting& setting) {
  std::vector<std::string> ids;
  for (const auto& [id, records] : corpus) {
    if (records.size() >= static_cast<std::size_t>(setting.span())) ids.push_back(id);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

std::vector<WindowSample> make_windows(const std::vector<DiaryRecord>& records,
                                       const HorizonSetting& setting) {
  if (setting.lookback < 1 || setting.horizon < 1) {
    throw ConfigError("setting " + setting.name() + " must have positive L and T");
  }
  const std::size_t n = records.size();
  const auto L = static_cast<std::size_t>(setting.lookback);
  const auto T = static_cast<std::size_t>(setting.horizon);
  std::vector<WindowSample> windows;
  if (n < L + T) return windows;
  windows.reserve(n - (L + T) + 1);
  for (std::size_t start = 0; start + L + T <= n; ++start) {
    WindowSample w;
    w.participant_id = records[start].participant_id;
    std::vector<double> values(L * kDietChannelCount, 0.0);
    for (std::size_t i = 0; i < L; ++i) {
      values[i * kDietChannelCount + kWeightColumn] = records[start + i].weight_kg;
    }
    w.history = SeriesMatrix(L, kDietChannelCount, std::move(values));
    w.raw_history_records.assign(records.begin() + static_cast<std::ptrdiff_t>(start),
                                 records.begin() + static_cast<std::ptrdiff_t>(start + L));
    double previous = records[start + L - 1].weight_kg;
    for (std::size_t k = 0; k < T; ++k) {
      const double current = records[start + L + k].weight_kg;
      w.future_weights.push_back(current);
      w.future_deltas.push_back(current - previous);
      previous = current;
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<WindowSample> make_windows(const Corpus& corpus,
                                       const std::vector<std::string>& participants,
                                       const HorizonSetting& setting) {
  std::vector<WindowSample> all;
  for (const auto& id : participants) {
    auto it = corpus.find(id);
    if (it == corpus.end()) throw DataError("unknown participant " + id);
    auto windows = make_windows(it->second, setting);
    all.insert(all.end(), std::make_move_iterator(windows.begin()),
               std::make_move_iterator(windows.end()));
  }
  return all;
}

std::size_t expected_window_count(const Corpus& corpus, const std::vector<std::string>& participants,
                                  const HorizonSetting& setting) {
  std::size_t total = 0;
  for (const auto& id : participants) {
    const auto n = static_cast<long long>(corpus.at(id).size());
    total += static_cast<std::size_t>(std::max(0LL, n - setting.span() + 1));
  }
  return total;
}

}  // namespace dietweight
