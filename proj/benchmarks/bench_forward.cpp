// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "dietweight/evaluation.hpp"
#include "dietweight/random.hpp"
#include "dietweight/synth.hpp"
#include "dietweight/training.hpp"

using namespace dietweight;

namespace {

struct Fixture {
  PipelineConfig config;
  ExperimentData data;
  std::unique_ptr<WeightPredictor> predictor;
  std::vector<PreparedWindow> windows;

  explicit Fixture(const std::string& model) {
    config.model.kind = model;
    config.model.nlinear_mode = NLinearMode::Mixing;
    SynthConfig synth;
    synth.participants = 40;
    data = prepare_experiment(generate_corpus(synth).corpus, config);
    predictor = build_predictor(config);
    for (std::size_t i = 0; i < 64; ++i) windows.push_back(predictor->prepare(data.train_windows[i]));
  }
};

void forward_backward(benchmark::State& state, const std::string& model) {
  Fixture f(model);
  std::size_t i = 0;
  for (auto _ : state) {
    Tape tape;
    const PreparedWindow& w = f.windows[i++ % f.windows.size()];
    Var loss = window_loss(f.predictor->forward(tape, w), f.predictor->layout(), *w.window, f.config.loss);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value().item());
  }
}

void rollout(benchmark::State& state) {
  Fixture f("nlinear");
  const auto& records = f.data.corpus.at(f.data.split.test.front());
  for (auto _ : state) {
    auto r = autoregressive_predict(*f.predictor, records, RolloutConfig{f.config.setting});
    benchmark::DoNotOptimize(r.predicted.data());
  }
}

void prepare_window(benchmark::State& state) {
  Fixture f("nlinear");
  std::size_t i = 0;
  for (auto _ : state) {
    auto w = f.predictor->prepare(f.data.train_windows[i++ % f.data.train_windows.size()]);
    benchmark::DoNotOptimize(w.weights.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(forward_backward, nlinear, std::string("nlinear"));
BENCHMARK_CAPTURE(forward_backward, itranslite, std::string("itranslite"));
BENCHMARK(rollout);
BENCHMARK(prepare_window);
BENCHMARK_MAIN();
