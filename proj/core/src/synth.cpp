// SPDX-License-Identifier: Apache-2.0
#include "dietweight/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <utility>

#include <nlohmann/json.hpp>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

void SynthConfig::validate() const {
  if (participants < 1 || days < 1 || vocab_size < 1) {
    throw ConfigError("synth needs participants, days and vocab_size >= 1");
  }
  if (days_max != 0 && days_max < days) throw ConfigError("synth days_max below days");
  if (min_items < 1 || max_items < min_items) throw ConfigError("synth needs 1 <= min_items <= max_items");
  if (!(sigma >= 0.0)) throw ConfigError("synth sigma must be >= 0");
  if (!(kcal_per_kg > 0.0)) throw ConfigError("synth kcal_per_kg must be positive");
  if (!(tdee_sd >= 0.0) || !(calorie_log_sd >= 0.0)) throw ConfigError("synth spreads must be >= 0");
  if (!(initial_weight_min >= kMinWeightKg && initial_weight_max <= kMaxWeightKg &&
        initial_weight_min <= initial_weight_max)) {
    throw ConfigError("synth initial weight range must lie inside [20, 300] kg");
  }
  if (!calories.empty()) {
    if (calories.size() != vocab_size) throw ConfigError("synth calories must list one value per token");
    for (double c : calories) {
      if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("synth calories must be positive");
    }
  }
}

std::string synth_token(std::size_t k) { return "ing_" + std::to_string(k); }

namespace {

std::string participant_name(std::size_t index, std::size_t total) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(total).size());
  std::string digits = std::to_string(index + 1);
  return "p" + std::string(width - digits.size(), '0') + digits;
}

std::size_t uniform_index(SplitMix64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  SynthCorpus out;
  out.calories = config.calories;
  if (out.calories.empty()) {
    SplitMix64 rng(derive_seed(config.seed, "calories"));
    for (std::size_t k = 0; k < config.vocab_size; ++k) {
      out.calories.push_back(std::exp(config.calorie_log_mean + config.calorie_log_sd * rng.normal()));
    }
  }

  for (std::size_t p = 0; p < config.participants; ++p) {
    SplitMix64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(p)));
    const std::string id = participant_name(p, config.participants);
    const std::size_t n = config.days_max > config.days ? uniform_index(rng, config.days, config.days_max)
                                                        : config.days;
    const double tdee = config.tdee_mean + config.tdee_sd * rng.normal();
    double weight = config.initial_weight_min +
                    (config.initial_weight_max - config.initial_weight_min) * rng.uniform();

    std::vector<DiaryRecord> records;
    records.reserve(n);
    for (std::size_t d = 0; d < n; ++d) {
      DiaryRecord record;
      record.participant_id = id;
      record.day = static_cast<int>(d + 1);
      record.weight_kg = weight;
      double calories = 0.0;
      for (MealSlot slot : kMealSlots) {
        MealLog meal;
        const std::size_t items = uniform_index(rng, config.min_items, config.max_items);
        for (std::size_t i = 0; i < items; ++i) {
          const std::size_t k = uniform_index(rng, 0, config.vocab_size - 1);
          meal.ingredients.push_back(synth_token(k));
          calories += out.calories[k];
        }
        record.meals.emplace(slot, std::move(meal));
      }
      records.push_back(std::move(record));
      out.trace.push_back(TraceDay{id, static_cast<int>(d + 1), calories, tdee});

      double next = weight + (calories - tdee) / config.kcal_per_kg;
      if (config.sigma > 0.0) next += config.sigma * rng.normal();
      if (next < kMinWeightKg || next > kMaxWeightKg) {
        next = std::clamp(next, kMinWeightKg, kMaxWeightKg);
        ++out.clamped;
      }
      weight = next;
    }
    out.corpus.emplace(id, std::move(records));
  }
  return out;
}

void write_trace(std::ostream& out, const std::vector<TraceDay>& trace) {
  for (const auto& t : trace) {
    out << nlohmann::json{{"participant", t.participant_id}, {"day", t.day}, {"calories", t.calories},
                          {"tdee", t.tdee}}
               .dump()
        << '\n';
  }
}

CausalStrength causal_strength_report(const Corpus& corpus, const std::vector<TraceDay>& trace) {
  std::map<std::pair<std::string, int>, const TraceDay*> by_day;
  for (const auto& t : trace) by_day[{t.participant_id, t.day}] = &t;

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [id, records] : corpus) {
    for (std::size_t d = 0; d + 1 < records.size(); ++d) {
      auto it = by_day.find({id, records[d].day});
      if (it == by_day.end()) throw DataError("trace lacks " + id + " day " + std::to_string(records[d].day));
      xs.push_back(it->second->calories - it->second->tdee);
      ys.push_back(records[d + 1].weight_kg - records[d].weight_kg);
    }
  }
  if (xs.size() < 2) throw DataError("causal strength needs at least two participant-days with a successor");

  const auto n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("causal strength undefined: zero variance");
  return CausalStrength{sxy / std::sqrt(sxx * syy), xs.size()};
}

}  // namespace dietweight
