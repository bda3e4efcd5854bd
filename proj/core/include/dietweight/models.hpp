// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dietweight/autodiff.hpp"
#include "dietweight/domain.hpp"

namespace dietweight {

struct ForecastDims {
  std::size_t lookback = 3;
  std::size_t horizon = 3;
  std::size_t channels = kDietChannelCount;
};

/// A parameterized map from an [L, C] history to a [T, C] prediction.
class Forecaster {
 public:
  explicit Forecaster(ForecastDims dims);
  virtual ~Forecaster() = default;

  virtual std::string kind() const = 0;
  /// (Re)initializes every parameter deterministically from `seed`.
  virtual void init(std::uint64_t seed) = 0;
  /// [L, C] -> [T, C]. Throws ShapeError on any other input shape.
  virtual Var forward(Tape& tape, Var history) = 0;
  virtual std::vector<Parameter*> parameters() = 0;
  /// kind, L, T, C and hyperparameters.
  virtual nlohmann::json manifest() const;

  SeriesMatrix predict(const SeriesMatrix& history);
  const ForecastDims& dims() const { return dims_; }
  std::size_t parameter_count();

 protected:
  void check_input(const Tensor& x) const;

  ForecastDims dims_;
};

enum class NLinearMode {
  /// One T x L map per channel; channels never mix.
  Individual,
  /// One T x L map shared by every channel.
  Shared,
  /// Each output channel reads the last-value-normalized history of every channel.
  Mixing,
};

std::string to_string(NLinearMode mode);
NLinearMode parse_nlinear_mode(const std::string& name);

/// Linear forecaster on last-value-normalized input:
/// y_c = W_c (x_c - a_c 1) + beta_c + a_c 1, with a_c = x[L-1, c].
class NLinear final : public Forecaster {
 public:
  NLinear(ForecastDims dims, NLinearMode mode = NLinearMode::Individual);

  std::string kind() const override { return "nlinear"; }
  /// W = 1/L on each channel's own history, beta = 0. Seed-independent.
  void init(std::uint64_t seed) override;
  Var forward(Tape& tape, Var history) override;
  std::vector<Parameter*> parameters() override;
  nlohmann::json manifest() const override;

  NLinearMode mode() const { return mode_; }
  /// Weight matrix read by output channel c (the shared one in Shared mode).
  Parameter& weight(std::size_t c);
  Parameter& bias(std::size_t c);

 private:
  NLinearMode mode_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

struct ITransLiteOptions {
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t d_ff = 64;
  /// Subtract each variate's last value before embedding and add it back to
  /// the output, as NLinear does.
  bool anchor_last = true;
};

/// Inverted transformer: each channel's whole history is one token, attention
/// runs across channels, post-norm residual blocks, shared projection head.
class ITransLite final : public Forecaster {
 public:
  ITransLite(ForecastDims dims, ITransLiteOptions options = {});

  std::string kind() const override { return "itranslite"; }
  /// Glorot-uniform matrices, zero biases, layer-norm gain 1 and bias 0.
  void init(std::uint64_t seed) override;
  Var forward(Tape& tape, Var history) override;
  std::vector<Parameter*> parameters() override;
  nlohmann::json manifest() const override;

  const ITransLiteOptions& options() const { return options_; }
  /// Softmax weights [C, C] of every (layer, head) from the latest forward.
  const std::vector<Tensor>& last_attention() const { return attention_; }

  struct Layer {
    Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    Parameter ln1_gain, ln1_bias;
    Parameter ff1_w, ff1_b, ff2_w, ff2_b;
    Parameter ln2_gain, ln2_bias;
  };
  Parameter& embed_weight() { return embed_w_; }
  Parameter& embed_bias() { return embed_b_; }
  Parameter& head_weight() { return head_w_; }
  Parameter& head_bias() { return head_b_; }
  Layer& layer(std::size_t i) { return layers_[i]; }

 private:
  ITransLiteOptions options_;
  Parameter embed_w_;  // [L, d_model]
  Parameter embed_b_;  // [d_model]
  std::vector<Layer> layers_;
  Parameter head_w_;  // [d_model, T]
  Parameter head_b_;  // [T]
  std::vector<Tensor> attention_;
};

struct ModelSpec {
  std::string kind = "nlinear";
  NLinearMode nlinear_mode = NLinearMode::Individual;
  ITransLiteOptions itrans;

  nlohmann::json to_json() const;
};

std::unique_ptr<Forecaster> make_forecaster(const ModelSpec& spec, ForecastDims dims);

}  // namespace dietweight
