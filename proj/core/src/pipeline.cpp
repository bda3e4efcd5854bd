// SPDX-License-Identifier: Apache-2.0
#include "dietweight/pipeline.hpp"

#include "dietweight/error.hpp"

namespace dietweight {

std::size_t InputLayout::active_slot_count() const {
  if (!use_meals) return 0;
  std::size_t n = 0;
  for (bool a : active_slots) n += a ? 1 : 0;
  return n;
}

std::string InputLayout::name() const {
  if (!use_meals) return "weight-only";
  static constexpr std::array<const char*, 3> kLetters{"B", "L", "S"};
  std::string out;
  for (std::size_t s = 0; s < kMealChannelCount; ++s) {
    if (!active_slots[s]) continue;
    if (!out.empty()) out += "+";
    out += kLetters[s];
  }
  return out.empty() ? "none" : out;
}

WeightPredictor::WeightPredictor(InputLayout layout, std::unique_ptr<MealEncoder> meals,
                                 std::unique_ptr<Forecaster> forecaster)
    : layout_(layout), meals_(std::move(meals)), forecaster_(std::move(forecaster)) {
  if (!forecaster_) throw ConfigError("weight predictor needs a forecaster");
  if (layout_.use_meals && !meals_) throw ConfigError("diet input needs a meal encoder");
  if (forecaster_->dims().channels != layout_.channels()) {
    throw ConfigError("forecaster has " + std::to_string(forecaster_->dims().channels) +
                      " channels, layout needs " + std::to_string(layout_.channels()));
  }
}

std::vector<Parameter*> WeightPredictor::parameters() {
  std::vector<Parameter*> out = forecaster_->parameters();
  if (layout_.use_meals && meals_) {
    for (Parameter* p : meals_->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> WeightPredictor::const_parameters() {
  std::vector<const Parameter*> out;
  for (Parameter* p : parameters()) out.push_back(p);
  return out;
}

PreparedWindow WeightPredictor::prepare(const WindowSample& window) const {
  PreparedWindow prepared;
  prepared.window = &window;
  const std::size_t L = window.history.rows();
  prepared.weights = Tensor(Shape{L, 1});
  for (std::size_t d = 0; d < L; ++d) prepared.weights[d] = window.history(d, kWeightColumn);
  if (layout_.use_meals && layout_.active_slot_count() > 0) {
    if (window.raw_history_records.size() != L) {
      throw DataError("window for " + window.participant_id + " lacks its history records");
    }
    prepared.meals = meals_->prepare(window.raw_history_records);
  }
  return prepared;
}

Var WeightPredictor::assemble(Tape& tape, const PreparedWindow& window) {
  Var weights = tape.constant(window.weights);
  if (!layout_.use_meals) return weights;
  const std::size_t L = window.weights.shape()[0];
  std::vector<Var> columns;
  if (layout_.active_slot_count() == 0) {
    columns.push_back(tape.constant(Tensor(Shape{L, kMealChannelCount})));
  } else {
    Var meal = meals_->forward(tape, window.meals);  // [L, 3]
    for (std::size_t s = 0; s < kMealChannelCount; ++s) {
      columns.push_back(layout_.active_slots[s] ? slice(meal, 1, s, s + 1)
                                                : tape.constant(Tensor(Shape{L, 1})));
    }
  }
  columns.push_back(weights);
  return concat(columns, 1);
}

Var WeightPredictor::forward(Tape& tape, const PreparedWindow& window) {
  return forecaster_->forward(tape, assemble(tape, window));
}

std::vector<double> WeightPredictor::observed_row(const DiaryRecord& record) {
  if (!layout_.use_meals) return {record.weight_kg};
  std::vector<double> row(kDietChannelCount, 0.0);
  if (layout_.active_slot_count() > 0) {
    const MealChannels channels = meals_->encode_day(record);
    for (std::size_t s = 0; s < kMealChannelCount; ++s) row[s] = channels[s];
  }
  row[kWeightColumn] = record.weight_kg;
  apply_mask(row);
  return row;
}

void WeightPredictor::apply_mask(std::span<double> row) const {
  if (!layout_.use_meals) return;
  for (std::size_t s = 0; s < kMealChannelCount; ++s) {
    if (!layout_.active_slots[s]) row[s] = 0.0;
  }
}

nlohmann::json WeightPredictor::manifest() {
  nlohmann::json j = forecaster_->manifest();
  j["use_meals"] = layout_.use_meals;
  j["active_slots"] = layout_.active_slots;
  if (meals_ && layout_.use_meals) {
    nlohmann::json encoders = nlohmann::json::array();
    for (std::size_t e = 0; e < meals_->encoder_count(); ++e) encoders.push_back(meals_->encoder(e).descriptor());
    j["encoders"] = encoders;
    j["projector_hidden"] = meals_->options().hidden;
    j["projector_shared"] = meals_->options().shared_projector;
  }
  return j;
}

}  // namespace dietweight
