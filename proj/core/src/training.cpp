// SPDX-License-Identifier: Apache-2.0
#include "dietweight/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("loss lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

double TrainConfig::lr_at(std::size_t epoch) const {
  return learning_rate * std::pow(lr_decay, static_cast<double>(epoch));
}

std::vector<double> delta_targets(double last_history_weight, std::span<const double> future_weights) {
  std::vector<double> deltas;
  deltas.reserve(future_weights.size());
  double previous = last_history_weight;
  for (double w : future_weights) {
    deltas.push_back(w - previous);
    previous = w;
  }
  return deltas;
}

double diet_loss(const std::vector<std::vector<double>>& meal_predictions, std::span<const double> deltas) {
  if (meal_predictions.size() != deltas.size() || deltas.empty()) {
    throw ShapeError("diet_loss: " + std::to_string(meal_predictions.size()) + " prediction rows for " +
                     std::to_string(deltas.size()) + " deltas");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < deltas.size(); ++t) {
    const auto& row = meal_predictions[t];
    if (row.empty()) throw ShapeError("diet_loss: empty meal row");
    double day = 0.0;
    for (double m : row) day += (deltas[t] - m) * (deltas[t] - m);
    total += day / static_cast<double>(row.size());
  }
  return total / static_cast<double>(deltas.size());
}

double weight_loss(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || actual.empty()) {
    throw ShapeError("weight_loss: " + std::to_string(predicted.size()) + " predictions for " +
                     std::to_string(actual.size()) + " targets");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < actual.size(); ++t) total += (actual[t] - predicted[t]) * (actual[t] - predicted[t]);
  return total / static_cast<double>(actual.size());
}

double combined_loss(const LossConfig& config, double weight_term, double diet_term) {
  config.validate();
  if (config.lambda == 1.0) return weight_term;
  if (config.lambda == 0.0) return diet_term;
  return config.lambda * weight_term + (1.0 - config.lambda) * diet_term;
}

Var diet_loss(Var meal_predictions, std::span<const double> deltas) {
  Tape& tape = *meal_predictions.tape;
  const Tensor& m = meal_predictions.value();
  if (m.rank() != 2 || m.shape()[0] != deltas.size()) {
    throw ShapeError("diet_loss: predictions " + shape_string(m.shape()) + " for " +
                     std::to_string(deltas.size()) + " deltas");
  }
  const std::size_t T = m.shape()[0];
  const std::size_t k = m.shape()[1];
  Tensor targets(Shape{T, k});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < k; ++j) targets.at(t, j) = deltas[t];
  return mean(square(sub(tape.constant(std::move(targets)), meal_predictions)));
}

Var weight_loss(Var predicted, std::span<const double> actual) {
  Tape& tape = *predicted.tape;
  const Tensor& p = predicted.value();
  if (p.size() != actual.size()) {
    throw ShapeError("weight_loss: predictions " + shape_string(p.shape()) + " for " +
                     std::to_string(actual.size()) + " targets");
  }
  Tensor targets(p.shape(), std::vector<double>(actual.begin(), actual.end()));
  return mean(square(sub(tape.constant(std::move(targets)), predicted)));
}

Var window_loss(Var prediction, const InputLayout& layout, const WindowSample& window,
                const LossConfig& config) {
  config.validate();
  const Tensor& y = prediction.value();
  const std::size_t T = window.future_weights.size();
  if (y.rank() != 2 || y.shape()[0] != T || y.shape()[1] != layout.channels()) {
    throw ShapeError("window_loss: prediction " + shape_string(y.shape()) + " does not match T=" +
                     std::to_string(T) + ", C=" + std::to_string(layout.channels()));
  }
  const std::size_t wc = layout.weight_column();
  Var w_loss = weight_loss(slice(prediction, 1, wc, wc + 1), window.future_weights);
  if (!layout.use_meals && config.lambda != 1.0) {
    throw ConfigError("weight-only input has no meal channels; lambda must be 1");
  }
  if (config.lambda == 1.0) return w_loss;
  if (layout.active_slot_count() == 0) return scale(w_loss, config.lambda);

  std::vector<Var> meal_columns;
  for (std::size_t s = 0; s < kMealChannelCount; ++s) {
    if (layout.active_slots[s]) meal_columns.push_back(slice(prediction, 1, s, s + 1));
  }
  Var meals = meal_columns.size() == 1 ? meal_columns.front() : concat(meal_columns, 1);
  Var d_loss = diet_loss(meals, window.future_deltas);
  if (config.lambda == 0.0) return d_loss;
  return add(scale(w_loss, config.lambda), scale(d_loss, 1.0 - config.lambda));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
  if (state.first_moment.empty()) {
    for (Parameter* p : params) {
      state.first_moment.emplace_back(p->value.shape());
      state.second_moment.emplace_back(p->value.shape());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, given " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (!p.grad.same_shape(p.value) || !m.same_shape(p.value)) {
      throw ShapeError("adam: gradient/moment shape mismatch for " + p.name);
    }
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.value[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

bool EarlyStopping::update(double val_loss) {
  const std::size_t epoch = seen_++;
  if (epoch == 0 || val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

double evaluate_loss(WeightPredictor& predictor, const std::vector<PreparedWindow>& windows,
                     const LossConfig& loss) {
  if (windows.empty()) throw DataError("cannot evaluate loss on zero windows");
  double total = 0.0;
  for (const auto& w : windows) {
    Tape tape;
    total += window_loss(predictor.forward(tape, w), predictor.layout(), *w.window, loss).value().item();
  }
  return total / static_cast<double>(windows.size());
}

namespace {

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

std::uint64_t mix_digest(std::uint64_t digest, std::uint64_t value) {
  for (int b = 0; b < 8; ++b) {
    digest ^= (value >> (8 * b)) & 0xFF;
    digest *= 0x100000001b3ULL;
  }
  return digest;
}

}  // namespace

TrainResult train(WeightPredictor& predictor, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const LossConfig& loss,
                  const TrainConfig& config, const std::function<void(const EpochRecord&)>& on_epoch) {
  loss.validate();
  config.validate();
  if (train_windows.empty()) throw DataError("no training windows");
  if (val_windows.empty()) throw DataError("no validation windows");
  if (!predictor.layout().use_meals && loss.lambda != 1.0) {
    throw ConfigError("weight-only input has no meal channels; lambda must be 1");
  }

  std::vector<PreparedWindow> train_prepared;
  train_prepared.reserve(train_windows.size());
  for (const auto& w : train_windows) train_prepared.push_back(predictor.prepare(w));
  std::vector<PreparedWindow> val_prepared;
  val_prepared.reserve(val_windows.size());
  for (const auto& w : val_windows) val_prepared.push_back(predictor.prepare(w));

  const std::vector<Parameter*> params = predictor.parameters();
  AdamState adam;
  EarlyStopping stopper(config.patience);
  std::vector<Tensor> best = snapshot(params);
  TrainResult result;
  result.order_digest = 0xcbf29ce484222325ULL;

  std::vector<std::size_t> order(train_prepared.size());
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    seeded_shuffle(order, derive_seed(config.seed, epoch));
    for (std::size_t idx : order) result.order_digest = mix_digest(result.order_digest, idx);

    const double lr = config.lr_at(epoch);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      std::vector<Var> losses;
      try {
        for (std::size_t i = begin; i < end; ++i) {
          const PreparedWindow& w = train_prepared[order[i]];
          losses.push_back(window_loss(predictor.forward(tape, w), predictor.layout(), *w.window, loss));
        }
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(begin) + ": " + e.what());
      }
      Var batch_loss = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) batch_loss = add(batch_loss, losses[i]);
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(losses.size()));
      const double value = batch_loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      tape.backward(batch_loss);
      adam_step(params, adam, lr);
      epoch_loss += value * static_cast<double>(end - begin);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.lr = lr;
    record.train_loss = epoch_loss / static_cast<double>(order.size());
    try {
      record.val_loss = evaluate_loss(predictor, val_prepared, loss);
    } catch (const NumericError& e) {
      throw NumericError("validation at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (stopper.update(record.val_loss)) best = snapshot(params);
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  return result;
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& r : history) {
    out << nlohmann::json{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}}
               .dump()
        << '\n';
  }
}

}  // namespace dietweight
