// SPDX-License-Identifier: Apache-2.0
#include "dietweight/domain.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "dietweight/error.hpp"

namespace dietweight {

std::string_view to_string(MealSlot slot) {
  switch (slot) {
    case MealSlot::Breakfast:
      return "breakfast";
    case MealSlot::Lunch:
      return "lunch";
    case MealSlot::Supper:
      return "supper";
  }
  return "unknown";
}

std::optional<MealSlot> parse_meal_slot(std::string_view name) {
  for (MealSlot slot : kMealSlots) {
    if (to_string(slot) == name) return slot;
  }
  return std::nullopt;
}

const MealLog& DiaryRecord::meal(MealSlot slot) const {
  auto it = meals.find(slot);
  if (it == meals.end()) {
    throw IngestError("record " + participant_id + " day " + std::to_string(day) +
                      ": slot absent: " + std::string(to_string(slot)));
  }
  return it->second;
}

std::vector<std::string> validate_record(const DiaryRecord& record) {
  std::vector<std::string> violations;
  if (record.participant_id.empty()) violations.emplace_back("participant id empty");
  if (record.day < 1) violations.emplace_back("day index must be >= 1");
  if (!std::isfinite(record.weight_kg) || record.weight_kg < kMinWeightKg ||
      record.weight_kg > kMaxWeightKg) {
    violations.emplace_back("weight out of range");
  }
  for (MealSlot slot : kMealSlots) {
    if (!record.meals.contains(slot)) {
      violations.emplace_back("slot absent: " + std::string(to_string(slot)));
      continue;
    }
    const MealLog& log = record.meals.at(slot);
    for (const auto& token : log.ingredients) {
      if (token.empty()) {
        violations.emplace_back("empty ingredient token in " + std::string(to_string(slot)));
        break;
      }
    }
    for (const auto& key : log.image_keys) {
      if (key.empty()) {
        violations.emplace_back("empty image key in " + std::string(to_string(slot)));
        break;
      }
    }
  }
  return violations;
}

std::string HorizonSetting::name() const {
  return std::to_string(lookback) + "-" + std::to_string(horizon);
}

const std::vector<HorizonSetting>& named_settings() {
  static const std::vector<HorizonSetting> settings{{3, 3}, {3, 5}, {3, 7}, {5, 5},
                                                    {5, 7}, {7, 3}, {7, 7}};
  return settings;
}

HorizonSetting parse_setting(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) {
    throw ConfigError("setting must look like L-T, got '" + std::string(text) + "'");
  }
  auto parse_int = [&](std::string_view part) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size() || value < 1) {
      throw ConfigError("setting must look like L-T with positive integers, got '" +
                        std::string(text) + "'");
    }
    return value;
  };
  return HorizonSetting{parse_int(text.substr(0, dash)), parse_int(text.substr(dash + 1))};
}

SeriesMatrix::SeriesMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

SeriesMatrix::SeriesMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "SeriesMatrix " << rows_ << "x" << cols_ << " given " << values_.size() << " values";
    throw ShapeError(msg.str());
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericError("SeriesMatrix value is not finite");
  }
}

std::vector<double> SeriesMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

}  // namespace dietweight
