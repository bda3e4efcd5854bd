// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"
#include "dietweight/training.hpp"
#include "support.hpp"

using namespace dietweight;

namespace {

WindowSample window_with(std::vector<double> future, double last) {
  WindowSample w;
  w.history = SeriesMatrix(3, kDietChannelCount);
  w.history(2, kWeightColumn) = last;
  w.future_weights = future;
  w.future_deltas = delta_targets(last, future);
  return w;
}

Tensor random_tensor(Shape shape, SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = 2.0 * rng.uniform() - 1.0;
  return t;
}

}  // namespace

TEST(Loss, DeltaTargets) {
  const std::vector<double> future{70.5, 70.0, 70.25};
  const auto d = delta_targets(70.0, future);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  EXPECT_DOUBLE_EQ(d[1], -0.5);
  EXPECT_DOUBLE_EQ(d[2], 0.25);
}

TEST(Loss, HandComputedValues) {
  const std::vector<double> deltas{1.0, 0.0};
  EXPECT_DOUBLE_EQ(diet_loss({{0, 1, 1}, {0, 0, 1}}, deltas), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(diet_loss({{0, 0, 1}, {1, 0, 0}}, deltas), 0.5);
  EXPECT_DOUBLE_EQ(diet_loss(std::vector<std::vector<double>>{{0.0}, {1.0}}, deltas), 1.0);
  const std::vector<double> p{1, 2}, a{2, 3};
  EXPECT_DOUBLE_EQ(weight_loss(p, a), 1.0);
  EXPECT_DOUBLE_EQ(combined_loss(LossConfig{0.5}, 4.0, 2.0), 3.0);
  EXPECT_THROW(combined_loss(LossConfig{1.5}, 1.0, 1.0), ConfigError);
  EXPECT_THROW(diet_loss(std::vector<std::vector<double>>{{0.0}}, deltas), ShapeError);
}

TEST(Loss, DifferentiableFormsMatchPlainForms) {
  SplitMix64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Tape tape;
    const Tensor m = random_tensor({3, 2}, rng);
    const std::vector<double> deltas{rng.uniform(), -rng.uniform(), 0.1};
    std::vector<std::vector<double>> rows(3, std::vector<double>(2));
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < 2; ++j) rows[t][j] = m.at(t, j);
    EXPECT_NEAR(diet_loss(tape.constant(m), deltas).value().item(), diet_loss(rows, deltas), 1e-14);
  }
}

TEST(Loss, EndpointsAreExact) {
  SplitMix64 rng(11);
  const InputLayout layout;
  for (int i = 0; i < 100; ++i) {
    const double last = 60.0 + 10.0 * rng.uniform();
    const WindowSample w = window_with({last + rng.normal(), last + rng.normal(), last + rng.normal()}, last);
    Tape tape;
    Var pred = tape.constant(random_tensor({3, 4}, rng));
    std::vector<double> wp(3);
    std::vector<std::vector<double>> meals(3, std::vector<double>(3));
    for (std::size_t t = 0; t < 3; ++t) {
      wp[t] = pred.value().at(t, 3);
      for (std::size_t s = 0; s < 3; ++s) meals[t][s] = pred.value().at(t, s);
    }
    const double lw = weight_loss(wp, w.future_weights);
    const double ld = diet_loss(meals, w.future_deltas);
    EXPECT_NEAR(window_loss(pred, layout, w, LossConfig{1.0}).value().item(), lw, 1e-12);
    EXPECT_NEAR(window_loss(pred, layout, w, LossConfig{0.0}).value().item(), ld, 1e-12);
    const double lambda = rng.uniform();
    EXPECT_NEAR(window_loss(pred, layout, w, LossConfig{lambda}).value().item(),
                lambda * lw + (1.0 - lambda) * ld, 1e-12);
    EXPECT_EQ(combined_loss(LossConfig{1.0}, lw, ld), lw);
    EXPECT_EQ(combined_loss(LossConfig{0.0}, lw, ld), ld);
  }
}

TEST(Loss, MaskedSlotsLeaveTheDietTerm) {
  const WindowSample w = window_with({71.0, 72.0, 73.0}, 70.0);
  Tape tape;
  Var pred = tape.constant(Tensor::matrix({{1, 5, 1, 70}, {1, 5, 1, 72}, {1, 5, 1, 73}}));
  const InputLayout lunch_off = InputLayout::with_slots({true, false, true});
  // Deltas are all 1; the active B and S columns hit them, the weight misses day 1 by 1.
  EXPECT_NEAR(window_loss(pred, lunch_off, w, LossConfig{0.5}).value().item(), 0.5 / 3.0, 1e-15);
  const InputLayout none = InputLayout::with_slots({false, false, false});
  EXPECT_NEAR(window_loss(pred, none, w, LossConfig{0.25}).value().item(), 0.25 / 3.0, 1e-15);
}

TEST(Loss, WeightOnlyRequiresLambdaOne) {
  const WindowSample w = window_with({71.0, 72.0, 73.0}, 70.0);
  Tape tape;
  Var pred = tape.constant(Tensor(Shape{3, 1}, 71.0));
  EXPECT_THROW(window_loss(pred, InputLayout::weight_only(), w, LossConfig{0.1}), ConfigError);
  EXPECT_NEAR(window_loss(pred, InputLayout::weight_only(), w, LossConfig{1.0}).value().item(), 5.0 / 3.0, 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("p", Tensor::vector({1.0, -2.0, 3.0}));
  p.grad = Tensor::vector({0.3, -40.0, 0.0});
  AdamState state;
  adam_step({&p}, state, 0.005);
  EXPECT_NEAR(p.value[0], 1.0 - 0.005, 1e-9);
  EXPECT_NEAR(p.value[1], -2.0 + 0.005, 1e-9);
  EXPECT_EQ(p.value[2], 3.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, MatchesReferenceRecurrence) {
  Parameter p("p", Tensor::vector({0.5}));
  AdamState state;
  double m = 0, v = 0, x = 0.5;
  const std::vector<double> grads{0.2, -0.1, 0.4, 0.05};
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    p.grad = Tensor::vector({grads[t - 1]});
    adam_step({&p}, state, 0.01);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.value[0], x, 1e-15);
  }
}

TEST(Schedule, LearningRateDecaysPerEpoch) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.lr_at(0), 0.005);
  EXPECT_DOUBLE_EQ(c.lr_at(1), 0.0045);
  EXPECT_NEAR(c.lr_at(10), 0.005 * std::pow(0.9, 10), 1e-18);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(EarlyStopping, StopsAfterPatienceStaleEpochs) {
  EarlyStopping s(7);
  const std::vector<double> losses{5, 4, 4, 4, 4, 4, 4, 4, 4};
  std::size_t seen = 0;
  for (double l : losses) {
    ASSERT_FALSE(s.should_stop()) << "stopped before epoch " << seen + 1;
    s.update(l);
    ++seen;
  }
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 1u);
  EXPECT_EQ(s.best_loss(), 4.0);
}

TEST(EarlyStopping, EqualLossIsNotImprovement) {
  EarlyStopping s(2);
  EXPECT_TRUE(s.update(3.0));
  EXPECT_FALSE(s.update(3.0));
  EXPECT_FALSE(s.update(3.0));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best_epoch(), 0u);
}

TEST(Train, IsDeterministicAndRestoresTheBestSnapshot) {
  PipelineConfig config = dwtest::small_pipeline();
  config.model.nlinear_mode = NLinearMode::Mixing;
  const ExperimentData data = dwtest::small_experiment(config);
  auto run = [&] {
    auto predictor = build_predictor(config);
    TrainConfig tc = config.train;
    tc.seed = config.shuffle_seed();
    TrainResult r = train_predictor(*predictor, data, config.loss, tc);
    std::vector<Tensor> values;
    for (Parameter* p : predictor->parameters()) values.push_back(p->value);
    std::vector<PreparedWindow> val;
    for (const auto& w : data.validation_windows) val.push_back(predictor->prepare(w));
    return std::tuple{r, values, evaluate_loss(*predictor, val, config.loss)};
  };
  const auto [a, pa, restored] = run();
  const auto [b, pb, restored_b] = run();
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_loss, b.history[e].val_loss);
    EXPECT_DOUBLE_EQ(a.history[e].lr, config.train.lr_at(e));
  }
  EXPECT_EQ(a.order_digest, b.order_digest);
  EXPECT_EQ(pa, pb);
  EXPECT_NEAR(restored, a.best_val_loss, 1e-12);
  for (const auto& r : a.history) EXPECT_LE(a.best_val_loss, r.val_loss);
  EXPECT_EQ(a.history[a.best_epoch].val_loss, a.best_val_loss);
}

TEST(Train, DifferentSeedsShuffleDifferently) {
  PipelineConfig config = dwtest::small_pipeline();
  config.train.max_epochs = 2;
  const ExperimentData data = dwtest::small_experiment(config);
  TrainConfig tc = config.train;
  auto p1 = build_predictor(config);
  tc.seed = 1;
  const auto r1 = train_predictor(*p1, data, config.loss, tc);
  auto p2 = build_predictor(config);
  tc.seed = 2;
  const auto r2 = train_predictor(*p2, data, config.loss, tc);
  EXPECT_NE(r1.order_digest, r2.order_digest);
}

TEST(Train, LambdaOneIgnoresMealsForIndividualChannels) {
  // With lambda = 1 and per-channel maps, the weight column never sees the meal
  // channels, so the diet-aware predictor must track the weight-only one.
  PipelineConfig diet = dwtest::small_pipeline();
  diet.loss.lambda = 1.0;
  const ExperimentData data = dwtest::small_experiment(diet);
  PipelineConfig weight = diet;
  weight.layout = InputLayout::weight_only();

  auto pd = build_predictor(diet);
  auto pw = build_predictor(weight);
  TrainConfig tc = diet.train;
  tc.seed = diet.shuffle_seed();
  const auto rd = train_predictor(*pd, data, diet.loss, tc);
  const auto rw = train_predictor(*pw, data, weight.loss, tc);
  ASSERT_EQ(rd.history.size(), rw.history.size());
  for (std::size_t e = 0; e < rd.history.size(); ++e) {
    EXPECT_NEAR(rd.history[e].val_loss, rw.history[e].val_loss, 1e-12);
  }
  auto& nd = dynamic_cast<NLinear&>(pd->forecaster());
  auto& nw = dynamic_cast<NLinear&>(pw->forecaster());
  for (std::size_t k = 0; k < nw.weight(0).value.size(); ++k) {
    EXPECT_NEAR(nd.weight(kWeightColumn).value[k], nw.weight(0).value[k], 1e-12);
  }
}

TEST(Train, FullPathGradientMatchesFiniteDifferences) {
  PipelineConfig config = dwtest::small_pipeline();
  config.model.nlinear_mode = NLinearMode::Mixing;
  const ExperimentData data = dwtest::small_experiment(config);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    config.seed = seed;
    auto predictor = build_predictor(config);
    SplitMix64 rng(seed);
    for (Parameter* p : predictor->parameters())
      for (double& v : p->value.values()) v += 0.05 * (2.0 * rng.uniform() - 1.0);
    const PreparedWindow w = predictor->prepare(data.train_windows[seed * 7 % data.train_windows.size()]);
    auto loss = [&](Tape& tape) { return window_loss(predictor->forward(tape, w), predictor->layout(), *w.window, LossConfig{0.3}); };
    EXPECT_LE(finite_diff_check(loss, predictor->parameters()).max_relative_error, 1e-4);
  }
}

TEST(Train, NonFiniteInputRaisesNumericError) {
  PipelineConfig config = dwtest::small_pipeline();
  const ExperimentData data = dwtest::small_experiment(config);
  auto train_windows = data.train_windows;
  train_windows[0].history(0, kWeightColumn) = std::nan("");
  auto predictor = build_predictor(config);
  EXPECT_THROW(train(*predictor, train_windows, data.validation_windows, config.loss, config.train), NumericError);
  EXPECT_THROW(train(*predictor, {}, data.validation_windows, config.loss, config.train), DataError);
}

TEST(Train, HistoryIsJsonLines) {
  std::ostringstream out;
  write_history(out, {EpochRecord{0, 0.005, 1.5, 2.5}, EpochRecord{1, 0.0045, 1.0, 2.0}});
  std::istringstream in(out.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch"), n);
    ++n;
  }
  EXPECT_EQ(n, 2u);
}
