// SPDX-License-Identifier: Apache-2.0
#include "dietweight/models.hpp"

#include <cmath>

#include "dietweight/error.hpp"
#include "dietweight/random.hpp"

namespace dietweight {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Forecaster
// ---------------------------------------------------------------------------

Forecaster::Forecaster(ForecastDims dims) : dims_(dims) {
  if (dims_.lookback == 0 || dims_.horizon == 0 || dims_.channels == 0) {
    throw ConfigError("forecaster dimensions must be positive");
  }
}

json Forecaster::manifest() const {
  return json{{"kind", kind()},
              {"lookback", dims_.lookback},
              {"horizon", dims_.horizon},
              {"channels", dims_.channels}};
}

void Forecaster::check_input(const Tensor& x) const {
  if (x.rank() != 2 || x.shape()[0] != dims_.lookback || x.shape()[1] != dims_.channels) {
    throw ShapeError(kind() + " expects history of shape " +
                     shape_string({dims_.lookback, dims_.channels}) + ", got " +
                     shape_string(x.shape()));
  }
}

SeriesMatrix Forecaster::predict(const SeriesMatrix& history) {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{history.rows(), history.cols()},
                               std::vector<double>(history.values().begin(), history.values().end())));
  const Tensor& y = forward(tape, x).value();
  return SeriesMatrix(y.shape()[0], y.shape()[1], std::vector<double>(y.values().begin(), y.values().end()));
}

std::size_t Forecaster::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

namespace {

Tensor ones(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}, 1.0); }

void glorot(Parameter& p, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, p.name));
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : p.value.values()) v = (2.0 * rng.uniform() - 1.0) * s;
}

/// Splits an [C, L] history into the per-row last values [C, 1] and the
/// last-value-centered rows [C, L].
std::pair<Var, Var> center_on_last(Tape& tape, Var rows, std::size_t lookback) {
  Var last = slice(rows, 1, lookback - 1, lookback);
  Var centered = sub(rows, matmul(last, tape.constant(ones(1, lookback))));
  return {last, centered};
}

}  // namespace

// ---------------------------------------------------------------------------
// NLinear
// ---------------------------------------------------------------------------

std::string to_string(NLinearMode mode) {
  switch (mode) {
    case NLinearMode::Individual:
      return "individual";
    case NLinearMode::Shared:
      return "shared";
    case NLinearMode::Mixing:
      return "mixing";
  }
  return "individual";
}

NLinearMode parse_nlinear_mode(const std::string& name) {
  if (name == "individual") return NLinearMode::Individual;
  if (name == "shared") return NLinearMode::Shared;
  if (name == "mixing") return NLinearMode::Mixing;
  throw ConfigError("unknown NLinear mode '" + name + "' (individual, shared, mixing)");
}

NLinear::NLinear(ForecastDims dims, NLinearMode mode) : Forecaster(dims), mode_(mode) {
  const std::size_t maps = mode_ == NLinearMode::Shared ? 1 : dims_.channels;
  const std::size_t inputs = mode_ == NLinearMode::Mixing ? dims_.lookback * dims_.channels : dims_.lookback;
  for (std::size_t c = 0; c < maps; ++c) {
    const std::string suffix = mode_ == NLinearMode::Shared ? "shared" : "c" + std::to_string(c);
    weights_.emplace_back("nlinear." + suffix + ".weight", Tensor(Shape{dims_.horizon, inputs}));
    biases_.emplace_back("nlinear." + suffix + ".bias", Tensor(Shape{dims_.horizon}));
  }
  init(0);
}

void NLinear::init(std::uint64_t /*seed*/) {
  const double w = 1.0 / static_cast<double>(dims_.lookback);
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    Tensor& W = weights_[m].value;
    W.fill(0.0);
    const std::size_t offset = mode_ == NLinearMode::Mixing ? m * dims_.lookback : 0;
    for (std::size_t t = 0; t < dims_.horizon; ++t)
      for (std::size_t l = 0; l < dims_.lookback; ++l) W.at(t, offset + l) = w;
    biases_[m].value.fill(0.0);
  }
  for (Parameter* p : parameters()) p->grad = Tensor(p->value.shape());
}

Parameter& NLinear::weight(std::size_t c) { return weights_[mode_ == NLinearMode::Shared ? 0 : c]; }
Parameter& NLinear::bias(std::size_t c) { return biases_[mode_ == NLinearMode::Shared ? 0 : c]; }

Var NLinear::forward(Tape& tape, Var history) {
  check_input(history.value());
  const std::size_t L = dims_.lookback;
  const std::size_t T = dims_.horizon;
  const std::size_t C = dims_.channels;
  auto [last, centered] = center_on_last(tape, transpose(history), L);
  Var anchor = matmul(last, tape.constant(ones(1, T)));  // [C, T]

  Var out;
  if (mode_ == NLinearMode::Shared) {
    Var W = tape.parameter(weights_[0]);
    out = broadcast_add(matmul(centered, transpose(W)), tape.parameter(biases_[0]));
  } else {
    // Mixing mode flattens every channel's centered history into one row.
    Var mixed;
    if (mode_ == NLinearMode::Mixing) {
      std::vector<Var> rows;
      for (std::size_t c = 0; c < C; ++c) rows.push_back(slice(centered, 0, c, c + 1));
      mixed = concat(rows, 1);  // [1, C*L]
    }
    std::vector<Var> outputs;
    for (std::size_t c = 0; c < C; ++c) {
      Var input = mode_ == NLinearMode::Mixing ? mixed : slice(centered, 0, c, c + 1);
      Var W = tape.parameter(weights_[c]);
      outputs.push_back(broadcast_add(matmul(input, transpose(W)), tape.parameter(biases_[c])));
    }
    out = concat(outputs, 0);  // [C, T]
  }
  return transpose(add(out, anchor));
}

std::vector<Parameter*> NLinear::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t m = 0; m < weights_.size(); ++m) {
    out.push_back(&weights_[m]);
    out.push_back(&biases_[m]);
  }
  return out;
}

json NLinear::manifest() const {
  json j = Forecaster::manifest();
  j["mode"] = to_string(mode_);
  return j;
}

// ---------------------------------------------------------------------------
// ITransLite
// ---------------------------------------------------------------------------

ITransLite::ITransLite(ForecastDims dims, ITransLiteOptions options)
    : Forecaster(dims), options_(options) {
  const std::size_t d = options_.d_model;
  if (d == 0 || options_.heads == 0 || options_.d_ff == 0) {
    throw ConfigError("itranslite dimensions must be positive");
  }
  if (d % options_.heads != 0) {
    throw ConfigError("itranslite d_model " + std::to_string(d) + " is not divisible by heads " +
                      std::to_string(options_.heads));
  }
  auto mat = [](const std::string& name, std::size_t r, std::size_t c) {
    return Parameter(name, Tensor(Shape{r, c}));
  };
  auto vec = [](const std::string& name, std::size_t n) { return Parameter(name, Tensor(Shape{n})); };

  embed_w_ = mat("itrans.embed.weight", dims_.lookback, d);
  embed_b_ = vec("itrans.embed.bias", d);
  for (std::size_t i = 0; i < options_.layers; ++i) {
    const std::string p = "itrans.layer" + std::to_string(i) + ".";
    layers_.push_back(Layer{
        mat(p + "wq", d, d), vec(p + "bq", d), mat(p + "wk", d, d), vec(p + "bk", d),
        mat(p + "wv", d, d), vec(p + "bv", d), mat(p + "wo", d, d), vec(p + "bo", d),
        vec(p + "ln1.gain", d), vec(p + "ln1.bias", d),
        mat(p + "ff1.weight", d, options_.d_ff), vec(p + "ff1.bias", options_.d_ff),
        mat(p + "ff2.weight", options_.d_ff, d), vec(p + "ff2.bias", d),
        vec(p + "ln2.gain", d), vec(p + "ln2.bias", d)});
  }
  head_w_ = mat("itrans.head.weight", d, dims_.horizon);
  head_b_ = vec("itrans.head.bias", dims_.horizon);
  init(0);
}

void ITransLite::init(std::uint64_t seed) {
  for (Parameter* p : parameters()) {
    p->value.fill(0.0);
    if (p->value.rank() == 2) glorot(*p, p->value.shape()[0], p->value.shape()[1], seed);
  }
  for (Layer& layer : layers_) {
    layer.ln1_gain.value.fill(1.0);
    layer.ln2_gain.value.fill(1.0);
  }
  for (Parameter* p : parameters()) p->grad = Tensor(p->value.shape());
}

Var ITransLite::forward(Tape& tape, Var history) {
  check_input(history.value());
  const std::size_t L = dims_.lookback;
  const std::size_t T = dims_.horizon;
  const std::size_t d = options_.d_model;
  const std::size_t dh = d / options_.heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  attention_.clear();

  Var tokens = transpose(history);  // [C, L], one token per variate
  Var last;
  if (options_.anchor_last) std::tie(last, tokens) = center_on_last(tape, tokens, L);

  Var z = broadcast_add(matmul(tokens, tape.parameter(embed_w_)), tape.parameter(embed_b_));
  for (Layer& layer : layers_) {
    Var q = broadcast_add(matmul(z, tape.parameter(layer.wq)), tape.parameter(layer.bq));
    Var k = broadcast_add(matmul(z, tape.parameter(layer.wk)), tape.parameter(layer.bk));
    Var v = broadcast_add(matmul(z, tape.parameter(layer.wv)), tape.parameter(layer.bv));
    std::vector<Var> heads;
    for (std::size_t h = 0; h < options_.heads; ++h) {
      Var qh = slice(q, 1, h * dh, (h + 1) * dh);
      Var kh = slice(k, 1, h * dh, (h + 1) * dh);
      Var vh = slice(v, 1, h * dh, (h + 1) * dh);
      Var weights = softmax(scale(matmul(qh, transpose(kh)), attn_scale));
      attention_.push_back(weights.value());
      heads.push_back(matmul(weights, vh));
    }
    Var attended = heads.size() == 1 ? heads.front() : concat(heads, 1);
    Var mixed = broadcast_add(matmul(attended, tape.parameter(layer.wo)), tape.parameter(layer.bo));
    z = layer_norm(add(z, mixed), tape.parameter(layer.ln1_gain), tape.parameter(layer.ln1_bias));

    Var hidden = relu(broadcast_add(matmul(z, tape.parameter(layer.ff1_w)), tape.parameter(layer.ff1_b)));
    Var ff = broadcast_add(matmul(hidden, tape.parameter(layer.ff2_w)), tape.parameter(layer.ff2_b));
    z = layer_norm(add(z, ff), tape.parameter(layer.ln2_gain), tape.parameter(layer.ln2_bias));
  }
  Var y = broadcast_add(matmul(z, tape.parameter(head_w_)), tape.parameter(head_b_));  // [C, T]
  if (options_.anchor_last) y = add(y, matmul(last, tape.constant(ones(1, T))));
  return transpose(y);
}

std::vector<Parameter*> ITransLite::parameters() {
  std::vector<Parameter*> out{&embed_w_, &embed_b_};
  for (Layer& l : layers_) {
    for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gain,
                         &l.ln1_bias, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b, &l.ln2_gain, &l.ln2_bias}) {
      out.push_back(p);
    }
  }
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  return out;
}

json ITransLite::manifest() const {
  json j = Forecaster::manifest();
  j["d_model"] = options_.d_model;
  j["heads"] = options_.heads;
  j["layers"] = options_.layers;
  j["d_ff"] = options_.d_ff;
  j["anchor_last"] = options_.anchor_last;
  return j;
}

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

json ModelSpec::to_json() const {
  if (kind == "nlinear") return json{{"kind", kind}, {"mode", to_string(nlinear_mode)}};
  return json{{"kind", kind},
              {"d_model", itrans.d_model},
              {"heads", itrans.heads},
              {"layers", itrans.layers},
              {"d_ff", itrans.d_ff},
              {"anchor_last", itrans.anchor_last}};
}

std::unique_ptr<Forecaster> make_forecaster(const ModelSpec& spec, ForecastDims dims) {
  if (spec.kind == "nlinear") return std::make_unique<NLinear>(dims, spec.nlinear_mode);
  if (spec.kind == "itranslite") return std::make_unique<ITransLite>(dims, spec.itrans);
  throw ConfigError("unknown model kind '" + spec.kind + "' (nlinear, itranslite)");
}

}  // namespace dietweight
