// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dietweight/autodiff.hpp"
#include "dietweight/domain.hpp"
#include "dietweight/models.hpp"
#include "dietweight/umrl.hpp"

namespace dietweight {

/// Which channels the forecaster sees. Diet input is [breakfast, lunch,
/// supper, weight]; weight-only input is the single weight column. Masked
/// slots stay in the layout as constant-zero channels.
struct InputLayout {
  bool use_meals = true;
  std::array<bool, kMealChannelCount> active_slots{true, true, true};

  std::size_t channels() const { return use_meals ? kDietChannelCount : 1; }
  std::size_t weight_column() const { return channels() - 1; }
  std::size_t active_slot_count() const;
  /// e.g. "B+L+S", "L", "none"; "weight-only" when meals are off.
  std::string name() const;

  static InputLayout weight_only() { return InputLayout{false, {false, false, false}}; }
  static InputLayout with_slots(std::array<bool, kMealChannelCount> slots) { return InputLayout{true, slots}; }
};

/// A history window ready for repeated forward passes: averaged item
/// embeddings per encoder and slot, plus the weight column.
struct PreparedWindow {
  const WindowSample* window = nullptr;
  PreparedMeals meals;
  Tensor weights;  // [L, 1]
};

/// The model-agnostic framework: meal representations (when enabled) are
/// stacked with weight and handed to any Forecaster.
class WeightPredictor {
 public:
  WeightPredictor(InputLayout layout, std::unique_ptr<MealEncoder> meals,
                  std::unique_ptr<Forecaster> forecaster);

  const InputLayout& layout() const { return layout_; }
  Forecaster& forecaster() { return *forecaster_; }
  MealEncoder* meal_encoder() { return meals_.get(); }

  /// Forecaster parameters followed by projector parameters.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> const_parameters();

  PreparedWindow prepare(const WindowSample& window) const;
  /// [L, C] input with meal channels computed on the tape.
  Var assemble(Tape& tape, const PreparedWindow& window);
  /// [T, C] prediction.
  Var forward(Tape& tape, const PreparedWindow& window);

  /// Input row for one observed day: masked meal channels then weight.
  std::vector<double> observed_row(const DiaryRecord& record);
  /// Zeroes the masked meal channels of a row in place.
  void apply_mask(std::span<double> row) const;

  nlohmann::json manifest();

 private:
  InputLayout layout_;
  std::unique_ptr<MealEncoder> meals_;
  std::unique_ptr<Forecaster> forecaster_;
};

}  // namespace dietweight
