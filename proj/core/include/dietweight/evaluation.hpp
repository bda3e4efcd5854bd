// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dietweight/ingest.hpp"
#include "dietweight/models.hpp"
#include "dietweight/pipeline.hpp"
#include "dietweight/training.hpp"
#include "dietweight/umrl.hpp"

namespace dietweight {

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

enum class FeedbackMode {
  /// Every predicted channel is appended to the context.
  PredictedChannels,
  /// Predicted weight plus meal channels encoded from the recorded future meals.
  TeacherForcedMeals,
};

std::string to_string(FeedbackMode mode);
FeedbackMode parse_feedback_mode(const std::string& name);

struct RolloutConfig {
  HorizonSetting setting;
  FeedbackMode feedback = FeedbackMode::PredictedChannels;
};

struct RolloutResult {
  std::string participant_id;
  /// Days L+1..N, each once.
  std::vector<int> days;
  std::vector<double> predicted;
  std::vector<double> actual;
  std::size_t steps = 0;
};

/// Starts from the first L recorded days and predicts T days at a time,
/// sliding the context, until N - L days are covered (the last step is
/// truncated). Throws DataError when N < L + T.
RolloutResult autoregressive_predict(WeightPredictor& predictor, const std::vector<DiaryRecord>& records,
                                     const RolloutConfig& config);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct ErrorStats {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t days = 0;
};

struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t days = 0;
  std::map<std::string, ErrorStats> per_participant;
};

ErrorStats error_stats(std::span<const double> predicted, std::span<const double> actual);
MetricReport compute_metrics(std::span<const double> predicted, std::span<const double> actual);
/// Pooled over every predicted day of every participant.
MetricReport compute_metrics(const std::vector<RolloutResult>& rollouts);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

/// Everything that defines one training + evaluation arm. All randomness
/// derives from `seed`.
struct PipelineConfig {
  HorizonSetting setting;
  ModelSpec model;
  InputLayout layout;
  std::vector<ItemEncoderConfig> encoders{ItemEncoderConfig{}};
  UmrlOptions umrl;
  LossConfig loss;
  TrainConfig train;
  FeedbackMode feedback = FeedbackMode::PredictedChannels;
  std::size_t min_count = kDefaultMinCount;
  SplitRatios ratios;
  std::uint64_t seed = 1;

  std::uint64_t split_seed() const;
  std::uint64_t shuffle_seed() const;
  std::uint64_t model_seed() const;
  std::uint64_t umrl_seed() const;
};

/// Corpus after vocabulary filtering, the split and the train/validation windows.
struct ExperimentData {
  HorizonSetting setting;
  Corpus corpus;
  Split split;
  Vocabulary vocabulary;
  std::vector<WindowSample> train_windows;
  std::vector<WindowSample> validation_windows;
};

/// Eligibility for the setting, split, train-only vocabulary, filtering and
/// windowing. `corpus` must already be normalized. Throws DataError when a
/// split member ends up without windows.
ExperimentData prepare_experiment(Corpus corpus, const PipelineConfig& config);

/// Fresh, initialized predictor for the config. Table encoders are loaded here.
std::unique_ptr<WeightPredictor> build_predictor(const PipelineConfig& config);

struct ArmResult {
  std::string name;
  PipelineConfig config;
  TrainResult training;
  MetricReport metrics;
  std::vector<RolloutResult> rollouts;
};

/// Rolls out every test participant.
std::vector<RolloutResult> rollout_test_split(WeightPredictor& predictor, const ExperimentData& data,
                                              const RolloutConfig& config);

TrainResult train_predictor(WeightPredictor& predictor, const ExperimentData& data, const LossConfig& loss,
                            const TrainConfig& train_config);

/// Builds, trains (shuffle seed derived from config.seed) and rolls out one arm.
ArmResult run_arm(const std::string& name, const ExperimentData& data, const PipelineConfig& config);

/// Every subset of {B, L, S}, masked rather than removed; 8 arms.
std::vector<ArmResult> ablate_meals(const ExperimentData& data, const PipelineConfig& base);

inline const std::vector<double>& default_lambda_sweep() {
  static const std::vector<double> values{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  return values;
}

std::vector<ArmResult> lambda_sweep(const ExperimentData& data, const PipelineConfig& base,
                                    const std::vector<double>& lambdas = default_lambda_sweep());

struct FusionArm {
  std::string name;
  std::vector<ItemEncoderConfig> encoders;
};

std::vector<ArmResult> fusion_eval(const ExperimentData& data, const PipelineConfig& base,
                                   const std::vector<FusionArm>& arms);

/// All arms in run order keyed by name; numbers are stable across runs.
nlohmann::json metrics_json(const std::vector<ArmResult>& arms);
void write_metrics(std::ostream& out, const std::vector<ArmResult>& arms);
/// participant,day,actual_kg,predicted_kg,arm with 9 significant digits.
void write_predictions(std::ostream& out, const std::vector<ArmResult>& arms);

}  // namespace dietweight
