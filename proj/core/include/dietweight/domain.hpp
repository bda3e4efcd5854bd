// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dietweight {

enum class MealSlot { Breakfast = 0, Lunch = 1, Supper = 2 };

inline constexpr std::array<MealSlot, 3> kMealSlots{MealSlot::Breakfast, MealSlot::Lunch,
                                                    MealSlot::Supper};

std::string_view to_string(MealSlot slot);
std::optional<MealSlot> parse_meal_slot(std::string_view name);

constexpr std::size_t slot_index(MealSlot slot) { return static_cast<std::size_t>(slot); }

/// One meal: ingredient tokens and image keys. Both are multisets.
struct MealLog {
  std::vector<std::string> ingredients;
  std::vector<std::string> image_keys;

  bool operator==(const MealLog&) const = default;
};

inline constexpr double kMinWeightKg = 20.0;
inline constexpr double kMaxWeightKg = 300.0;

/// One participant-day.
struct DiaryRecord {
  std::string participant_id;
  int day = 1;
  double weight_kg = 0.0;
  std::map<MealSlot, MealLog> meals;

  const MealLog& meal(MealSlot slot) const;

  bool operator==(const DiaryRecord&) const = default;
};

/// Returns every violated invariant; empty means the record is valid.
std::vector<std::string> validate_record(const DiaryRecord& record);

/// Lookback L and horizon T, in days.
struct HorizonSetting {
  int lookback = 3;
  int horizon = 3;

  int span() const { return lookback + horizon; }
  std::string name() const;

  bool operator==(const HorizonSetting&) const = default;
};

/// The seven named L-T settings, in the canonical order.
const std::vector<HorizonSetting>& named_settings();

/// Parses "L-T". Throws ConfigError on malformed input or non-positive values.
HorizonSetting parse_setting(std::string_view text);

/// Channel layout of the forecaster input. Weight is always the last column.
inline constexpr std::size_t kMealChannelCount = 3;
inline constexpr std::size_t kDietChannelCount = 4;
inline constexpr std::size_t kWeightColumn = 3;

/// Row-major days x channels matrix of finite values.
class SeriesMatrix {
 public:
  SeriesMatrix() = default;
  SeriesMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  SeriesMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }
  std::vector<double> column(std::size_t c) const;

  bool operator==(const SeriesMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// A training/evaluation window cut from one participant's days.
/// Meal columns of `history` are zero until filled by the meal encoder.
struct WindowSample {
  std::string participant_id;
  SeriesMatrix history;
  std::vector<double> future_weights;
  std::vector<double> future_deltas;
  std::vector<DiaryRecord> raw_history_records;

  double last_history_weight() const { return history(history.rows() - 1, kWeightColumn); }
};

}  // namespace dietweight
