// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "dietweight/autodiff.hpp"
#include "dietweight/pipeline.hpp"

namespace dietweight {

/// L = lambda * L_weight + (1 - lambda) * L_diet, both averaged over the
/// horizon and then over the batch.
struct LossConfig {
  double lambda = 0.1;

  void validate() const;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.005;
  /// Per-epoch multiplicative decay: lr(e) = learning_rate * lr_decay^e.
  double lr_decay = 0.9;
  std::size_t patience = 7;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(std::size_t epoch) const;
};

/// delta[0] = future[0] - last; delta[k] = future[k] - future[k-1].
std::vector<double> delta_targets(double last_history_weight, std::span<const double> future_weights);

/// Rows are days, columns the predicted meal channels (any count >= 1).
/// Per day: mean over channels of (delta_t - m_t)^2; then mean over days.
double diet_loss(const std::vector<std::vector<double>>& meal_predictions, std::span<const double> deltas);
double weight_loss(std::span<const double> predicted, std::span<const double> actual);
double combined_loss(const LossConfig& config, double weight_term, double diet_term);

/// Differentiable forms over a [T, k] meal block / [T, 1] weight column.
Var diet_loss(Var meal_predictions, std::span<const double> deltas);
Var weight_loss(Var predicted, std::span<const double> actual);

/// Loss of one window's [T, C] prediction under `layout`: the weight column
/// against future weights, active meal columns against the deltas. Without
/// active meal channels the diet term is absent and the loss is lambda * L_weight
/// (exactly L_weight at lambda = 1). Weight-only input requires lambda = 1.
Var window_loss(Var prediction, const InputLayout& layout, const WindowSample& window,
                const LossConfig& config);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One bias-corrected Adam update using each parameter's accumulated gradient.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Early stopping and the loop
// ---------------------------------------------------------------------------

/// Tracks the best (strictly lowest) validation loss; stops after `patience`
/// consecutive epochs without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `val_loss` is a new best.
  bool update(double val_loss);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  /// FNV-1a over every epoch's sample order; equal digests mean equal data order.
  std::uint64_t order_digest = 0;
};

/// Mean combined loss over `windows` without touching gradients.
double evaluate_loss(WeightPredictor& predictor, const std::vector<PreparedWindow>& windows,
                     const LossConfig& loss);

/// Seeded-shuffled mini-batch Adam with per-epoch lr decay and early stopping
/// on the validation loss. Leaves the predictor holding the best snapshot.
/// Throws DataError for empty splits and NumericError for a non-finite loss.
TrainResult train(WeightPredictor& predictor, const std::vector<WindowSample>& train_windows,
                  const std::vector<WindowSample>& val_windows, const LossConfig& loss,
                  const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// {"epoch":e,"lr":...,"train_loss":...,"val_loss":...} per line.
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace dietweight
