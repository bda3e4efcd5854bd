// SPDX-License-Identifier: Apache-2.0
#include "dietweight/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

std::string to_string(FeedbackMode mode) {
  return mode == FeedbackMode::PredictedChannels ? "predicted_channels" : "teacher_forced_meals";
}

FeedbackMode parse_feedback_mode(const std::string& name) {
  if (name == "predicted_channels") return FeedbackMode::PredictedChannels;
  if (name == "teacher_forced_meals") return FeedbackMode::TeacherForcedMeals;
  throw ConfigError("unknown rollout mode '" + name + "' (predicted_channels|teacher_forced_meals)");
}

RolloutResult autoregressive_predict(WeightPredictor& predictor, const std::vector<DiaryRecord>& records,
                                     const RolloutConfig& config) {
  const auto L = static_cast<std::size_t>(config.setting.lookback);
  const auto T = static_cast<std::size_t>(config.setting.horizon);
  const std::size_t N = records.size();
  if (N < L + T) {
    throw DataError("rollout needs at least " + std::to_string(L + T) + " days, participant has " +
                    std::to_string(N));
  }
  const std::size_t C = predictor.layout().channels();
  const std::size_t wc = predictor.layout().weight_column();
  Forecaster& forecaster = predictor.forecaster();

  std::vector<std::vector<double>> context;
  context.reserve(N + T);
  for (std::size_t d = 0; d < L; ++d) context.push_back(predictor.observed_row(records[d]));

  RolloutResult result;
  result.participant_id = records.front().participant_id;
  const std::size_t target = N - L;
  while (result.predicted.size() < target) {
    Tensor x(Shape{L, C});
    const std::size_t start = context.size() - L;
    for (std::size_t r = 0; r < L; ++r)
      for (std::size_t c = 0; c < C; ++c) x.at(r, c) = context[start + r][c];
    Tape tape;
    const Tensor y = forecaster.forward(tape, tape.constant(std::move(x))).value();
    ++result.steps;
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t day_index = context.size();
      std::vector<double> row(C);
      for (std::size_t c = 0; c < C; ++c) row[c] = y.at(t, c);
      if (config.feedback == FeedbackMode::TeacherForcedMeals && day_index < N) {
        const double w = row[wc];
        row = predictor.observed_row(records[day_index]);
        row[wc] = w;
      } else {
        predictor.apply_mask(row);
      }
      if (result.predicted.size() < target) {
        result.days.push_back(records[day_index].day);
        result.predicted.push_back(row[wc]);
        result.actual.push_back(records[day_index].weight_kg);
      }
      context.push_back(std::move(row));
    }
  }
  return result;
}

ErrorStats error_stats(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw ShapeError("metrics: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(actual.size()) + " actual values");
  }
  if (actual.empty()) throw DataError("metrics need at least one day");
  ErrorStats s;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double e = predicted[i] - actual[i];
    s.mse += e * e;
    s.mae += std::abs(e);
  }
  s.days = actual.size();
  s.mse /= static_cast<double>(s.days);
  s.mae /= static_cast<double>(s.days);
  return s;
}

MetricReport compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
  const ErrorStats s = error_stats(predicted, actual);
  return MetricReport{s.mse, s.mae, s.days, {}};
}

MetricReport compute_metrics(const std::vector<RolloutResult>& rollouts) {
  std::vector<double> predicted;
  std::vector<double> actual;
  MetricReport report;
  for (const auto& r : rollouts) {
    report.per_participant[r.participant_id] = error_stats(r.predicted, r.actual);
    predicted.insert(predicted.end(), r.predicted.begin(), r.predicted.end());
    actual.insert(actual.end(), r.actual.begin(), r.actual.end());
  }
  const ErrorStats pooled = error_stats(predicted, actual);
  report.mse = pooled.mse;
  report.mae = pooled.mae;
  report.days = pooled.days;
  return report;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

std::uint64_t PipelineConfig::split_seed() const { return derive_seed(seed, "split"); }
std::uint64_t PipelineConfig::shuffle_seed() const { return derive_seed(seed, "shuffle"); }
std::uint64_t PipelineConfig::model_seed() const { return derive_seed(seed, "model"); }
std::uint64_t PipelineConfig::umrl_seed() const { return derive_seed(seed, "umrl"); }

ExperimentData prepare_experiment(Corpus corpus, const PipelineConfig& config) {
  ExperimentData data;
  data.setting = config.setting;
  const std::vector<std::string> eligible = eligible_participants(corpus, config.setting);
  if (eligible.size() < 3) {
    throw DataError("no training windows: only " + std::to_string(eligible.size()) +
                    " participants have at least " + std::to_string(config.setting.span()) + " days");
  }
  data.split = split_participants(eligible, config.ratios, config.split_seed());

  // Keep only eligible participants; the rest cannot contribute windows or rollouts.
  Corpus kept;
  for (const auto& id : eligible) kept.emplace(id, std::move(corpus.at(id)));
  data.vocabulary = build_vocabulary(kept, data.split.train, config.min_count);
  filter_to_vocabulary(kept, data.vocabulary);
  data.corpus = std::move(kept);

  data.train_windows = make_windows(data.corpus, data.split.train, config.setting);
  data.validation_windows = make_windows(data.corpus, data.split.validation, config.setting);
  if (data.train_windows.empty()) throw DataError("no training windows");
  if (data.validation_windows.empty()) throw DataError("no validation windows");
  if (data.split.test.empty()) throw DataError("no test participants");
  return data;
}

std::unique_ptr<WeightPredictor> build_predictor(const PipelineConfig& config) {
  ForecastDims dims{static_cast<std::size_t>(config.setting.lookback),
                    static_cast<std::size_t>(config.setting.horizon), config.layout.channels()};
  auto forecaster = make_forecaster(config.model, dims);
  forecaster->init(config.model_seed());
  std::unique_ptr<MealEncoder> meals;
  if (config.layout.use_meals) {
    if (config.encoders.empty()) throw ConfigError("diet input needs at least one item encoder");
    std::vector<ItemEncoder> encoders;
    for (const auto& e : config.encoders) encoders.push_back(ItemEncoder::from_config(e));
    meals = std::make_unique<MealEncoder>(std::move(encoders), config.umrl, config.umrl_seed());
  }
  return std::make_unique<WeightPredictor>(config.layout, std::move(meals), std::move(forecaster));
}

std::vector<RolloutResult> rollout_test_split(WeightPredictor& predictor, const ExperimentData& data,
                                              const RolloutConfig& config) {
  std::vector<RolloutResult> out;
  out.reserve(data.split.test.size());
  for (const auto& id : data.split.test) {
    out.push_back(autoregressive_predict(predictor, data.corpus.at(id), config));
  }
  return out;
}

ArmResult run_arm(const std::string& name, const ExperimentData& data, const PipelineConfig& config) {
  if (!(config.setting == data.setting)) {
    throw ConfigError("arm setting " + config.setting.name() + " differs from prepared data " +
                      data.setting.name());
  }
  ArmResult arm;
  arm.name = name;
  arm.config = config;
  auto predictor = build_predictor(config);
  TrainConfig train = config.train;
  train.seed = config.shuffle_seed();
  arm.training = train_predictor(*predictor, data, config.loss, train);
  arm.rollouts = rollout_test_split(*predictor, data, RolloutConfig{config.setting, config.feedback});
  arm.metrics = compute_metrics(arm.rollouts);
  return arm;
}

TrainResult train_predictor(WeightPredictor& predictor, const ExperimentData& data, const LossConfig& loss,
                            const TrainConfig& train_config) {
  return train(predictor, data.train_windows, data.validation_windows, loss, train_config);
}

std::vector<ArmResult> ablate_meals(const ExperimentData& data, const PipelineConfig& base) {
  if (!base.layout.use_meals) throw ConfigError("meal ablation needs diet input");
  std::vector<ArmResult> arms;
  for (unsigned mask = 0; mask < 8; ++mask) {
    PipelineConfig config = base;
    config.layout = InputLayout::with_slots({(mask & 1u) != 0, (mask & 2u) != 0, (mask & 4u) != 0});
    arms.push_back(run_arm("meals=" + config.layout.name(), data, config));
  }
  return arms;
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<ArmResult> lambda_sweep(const ExperimentData& data, const PipelineConfig& base,
                                    const std::vector<double>& lambdas) {
  std::vector<ArmResult> arms;
  for (double lambda : lambdas) {
    PipelineConfig config = base;
    config.loss.lambda = lambda;
    config.loss.validate();
    arms.push_back(run_arm("lambda=" + format_number(lambda), data, config));
  }
  return arms;
}

std::vector<ArmResult> fusion_eval(const ExperimentData& data, const PipelineConfig& base,
                                   const std::vector<FusionArm>& fusion_arms) {
  if (!base.layout.use_meals) throw ConfigError("fusion evaluation needs diet input");
  std::vector<ArmResult> arms;
  for (const auto& f : fusion_arms) {
    PipelineConfig config = base;
    config.encoders = f.encoders;
    arms.push_back(run_arm(f.name, data, config));
  }
  return arms;
}

nlohmann::json metrics_json(const std::vector<ArmResult>& arms) {
  nlohmann::json reports = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& arm : arms) {
    if (reports.contains(arm.name)) throw ConfigError("duplicate arm name " + arm.name);
    nlohmann::json participants = nlohmann::json::object();
    for (const auto& [id, s] : arm.metrics.per_participant) {
      participants[id] = {{"mse", s.mse}, {"mae", s.mae}, {"days", s.days}};
    }
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(arm.training.order_digest));
    nlohmann::json encoders = nlohmann::json::array();
    if (arm.config.layout.use_meals) {
      for (const auto& e : arm.config.encoders) encoders.push_back(e.descriptor());
    }
    reports[arm.name] = {
        {"mse", arm.metrics.mse},
        {"mae", arm.metrics.mae},
        {"days", arm.metrics.days},
        {"participants", participants},
        {"model", arm.config.model.kind},
        {"input", arm.config.layout.name()},
        {"encoders", encoders},
        {"lambda", arm.config.loss.lambda},
        {"setting", arm.config.setting.name()},
        {"rollout", to_string(arm.config.feedback)},
    };
    if (!arm.training.history.empty()) {
      reports[arm.name]["epochs"] = arm.training.history.size();
      reports[arm.name]["best_epoch"] = arm.training.best_epoch;
      reports[arm.name]["best_val_loss"] = arm.training.best_val_loss;
      reports[arm.name]["order_digest"] = digest;
    }
    order.push_back(arm.name);
  }
  return {{"arms", order}, {"reports", reports}};
}

void write_metrics(std::ostream& out, const std::vector<ArmResult>& arms) {
  out << metrics_json(arms).dump(2) << '\n';
}

void write_predictions(std::ostream& out, const std::vector<ArmResult>& arms) {
  out << "participant,day,actual_kg,predicted_kg,arm\n";
  for (const auto& arm : arms) {
    for (const auto& r : arm.rollouts) {
      for (std::size_t i = 0; i < r.days.size(); ++i) {
        out << r.participant_id << ',' << r.days[i] << ',' << format_number(r.actual[i]) << ','
            << format_number(r.predicted[i]) << ',' << arm.name << '\n';
      }
    }
  }
}

}  // namespace dietweight
