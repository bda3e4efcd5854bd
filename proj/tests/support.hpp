// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dietweight/domain.hpp"
#include "dietweight/evaluation.hpp"
#include "dietweight/ingest.hpp"
#include "dietweight/synth.hpp"

namespace dwtest {

inline dietweight::DiaryRecord make_record(const std::string& id, int day, double weight,
                                           std::vector<std::string> b = {"rice"},
                                           std::vector<std::string> l = {"egg"},
                                           std::vector<std::string> s = {"milk"}) {
  dietweight::DiaryRecord r;
  r.participant_id = id;
  r.day = day;
  r.weight_kg = weight;
  r.meals[dietweight::MealSlot::Breakfast].ingredients = std::move(b);
  r.meals[dietweight::MealSlot::Lunch].ingredients = std::move(l);
  r.meals[dietweight::MealSlot::Supper].ingredients = std::move(s);
  return r;
}

/// Days 1..weights.size() for one participant.
inline std::vector<dietweight::DiaryRecord> make_series(const std::string& id, const std::vector<double>& weights) {
  std::vector<dietweight::DiaryRecord> out;
  for (std::size_t d = 0; d < weights.size(); ++d) out.push_back(make_record(id, static_cast<int>(d + 1), weights[d]));
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dietweight_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small synthetic cohort, ready for training under `config`.
inline dietweight::ExperimentData small_experiment(const dietweight::PipelineConfig& config,
                                                   std::size_t participants = 30, std::size_t days = 12) {
  dietweight::SynthConfig synth;
  synth.participants = participants;
  synth.days = days;
  synth.vocab_size = 20;
  synth.seed = config.seed;
  return dietweight::prepare_experiment(dietweight::generate_corpus(synth).corpus, config);
}

/// Hashed-bag encoder small enough for finite differences.
inline dietweight::PipelineConfig small_pipeline() {
  dietweight::PipelineConfig config;
  config.encoders = {dietweight::ItemEncoderConfig{dietweight::EncoderKind::HashedBag,
                                                   dietweight::Modality::Text, 16, ""}};
  config.umrl.hidden = 8;
  config.train.max_epochs = 6;
  config.train.batch_size = 16;
  config.min_count = 1;
  return config;
}

}  // namespace dwtest
