// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dietweight/ingest.hpp"

namespace dietweight {

/// Synthetic cohort with a linear energy-balance link from food to weight:
/// w[t+1] = w[t] + (C[t] - TDEE) / kcal_per_kg + Normal(0, sigma^2).
struct SynthConfig {
  std::size_t participants = 200;
  std::size_t days = 20;
  /// When above `days`, each participant's length is uniform in [days, days_max].
  std::size_t days_max = 0;
  std::size_t vocab_size = 60;
  /// Per-token kcal; drawn from LogNormal(calorie_log_mean, calorie_log_sd) when empty.
  std::vector<double> calories;
  double calorie_log_mean = 5.0106352940962555;  // ln 150
  double calorie_log_sd = 0.5;
  std::size_t min_items = 1;
  std::size_t max_items = 5;
  double tdee_mean = 2000.0;
  double tdee_sd = 200.0;
  double initial_weight_min = 50.0;
  double initial_weight_max = 100.0;
  double sigma = 0.15;
  double kcal_per_kg = 7700.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TraceDay {
  std::string participant_id;
  int day = 1;
  double calories = 0.0;
  double tdee = 0.0;
};

struct SynthCorpus {
  Corpus corpus;
  std::vector<TraceDay> trace;
  std::vector<double> calories;  // per token ing_k
  /// Weight updates pulled back into [20, 300] kg.
  std::size_t clamped = 0;
};

/// "ing_<k>" for k in [0, K).
std::string synth_token(std::size_t k);

SynthCorpus generate_corpus(const SynthConfig& config);

/// {"participant":..,"day":..,"calories":..,"tdee":..} per line.
void write_trace(std::ostream& out, const std::vector<TraceDay>& trace);

struct CausalStrength {
  double correlation = 0.0;
  std::size_t pairs = 0;
};

/// Pearson r between C[t] - TDEE and w[t+1] - w[t] over all participant-days
/// that have a next day. Throws DataError for fewer than two pairs or zero variance.
CausalStrength causal_strength_report(const Corpus& corpus, const std::vector<TraceDay>& trace);

}  // namespace dietweight
