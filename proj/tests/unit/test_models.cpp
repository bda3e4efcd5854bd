// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "dietweight/error.hpp"
#include "dietweight/models.hpp"
#include "dietweight/random.hpp"

using namespace dietweight;

namespace {

using Mat = std::vector<std::vector<double>>;

SeriesMatrix random_history(std::size_t L, std::size_t C, std::uint64_t seed) {
  SplitMix64 rng(seed);
  SeriesMatrix m(L, C);
  for (std::size_t r = 0; r < L; ++r)
    for (std::size_t c = 0; c < C; ++c) m(r, c) = 60.0 + 20.0 * rng.uniform();
  return m;
}

void randomize(Forecaster& f, std::uint64_t seed, double scale = 0.3) {
  SplitMix64 rng(seed);
  for (Parameter* p : f.parameters())
    for (double& v : p->value.values()) v += scale * (2.0 * rng.uniform() - 1.0);
}

// ---- independent ITransLite: plain loops over nested vectors ----

Mat to_mat(const Tensor& t) {
  Mat m(t.shape()[0], std::vector<double>(t.shape()[1]));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat affine(const Mat& x, const Tensor& w, const Tensor& b) {
  Mat out(x.size(), std::vector<double>(w.shape()[1], 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w.shape()[1]; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) s += x[i][k] * w.at(k, j);
      out[i][j] = s;
    }
  return out;
}

Mat norm_rows(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat out = x;
  for (auto& row : out) {
    double m = 0;
    for (double v : row) m += v;
    m /= static_cast<double>(row.size());
    double var = 0;
    for (double v : row) var += (v - m) * (v - m);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = g[j] * (row[j] - m) / std::sqrt(var + 1e-5) + b[j];
  }
  return out;
}

Mat oracle_itrans(ITransLite& model, const SeriesMatrix& x) {
  const auto& o = model.options();
  const std::size_t L = x.rows(), C = x.cols(), d = o.d_model, dh = d / o.heads;
  Mat tokens(C, std::vector<double>(L));
  std::vector<double> last(C);
  for (std::size_t c = 0; c < C; ++c) {
    last[c] = o.anchor_last ? x(L - 1, c) : 0.0;
    for (std::size_t l = 0; l < L; ++l) tokens[c][l] = x(l, c) - last[c];
  }
  Mat z = affine(tokens, model.embed_weight().value, model.embed_bias().value);
  for (std::size_t li = 0; li < o.layers; ++li) {
    auto& ly = model.layer(li);
    const Mat q = affine(z, ly.wq.value, ly.bq.value);
    const Mat k = affine(z, ly.wk.value, ly.bk.value);
    const Mat v = affine(z, ly.wv.value, ly.bv.value);
    Mat att(C, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < o.heads; ++h) {
      for (std::size_t i = 0; i < C; ++i) {
        std::vector<double> s(C);
        double mx = -1e300;
        for (std::size_t j = 0; j < C; ++j) {
          double dot = 0;
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) dot += q[i][e] * k[j][e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double total = 0;
        for (double& sj : s) total += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j < C; ++j)
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) att[i][e] += s[j] / total * v[j][e];
      }
    }
    const Mat mixed = affine(att, ly.wo.value, ly.bo.value);
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t e = 0; e < d; ++e) z[i][e] += mixed[i][e];
    z = norm_rows(z, ly.ln1_gain.value, ly.ln1_bias.value);
    Mat hidden = affine(z, ly.ff1_w.value, ly.ff1_b.value);
    for (auto& row : hidden)
      for (double& hv : row) hv = std::max(0.0, hv);
    const Mat ff = affine(hidden, ly.ff2_w.value, ly.ff2_b.value);
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t e = 0; e < d; ++e) z[i][e] += ff[i][e];
    z = norm_rows(z, ly.ln2_gain.value, ly.ln2_bias.value);
  }
  const Mat y = affine(z, model.head_weight().value, model.head_bias().value);  // [C, T]
  Mat out(y[0].size(), std::vector<double>(C));
  for (std::size_t t = 0; t < out.size(); ++t)
    for (std::size_t c = 0; c < C; ++c) out[t][c] = y[c][t] + last[c];
  return out;
}

std::size_t itrans_count(std::size_t L, std::size_t T, const ITransLiteOptions& o) {
  const std::size_t d = o.d_model, f = o.d_ff;
  const std::size_t per_layer = 4 * (d * d + d) + 2 * (2 * d) + (d * f + f) + (f * d + d);
  return (L * d + d) + o.layers * per_layer + (d * T + T);
}

}  // namespace

TEST(NLinear, InitRepeatsLastValueOnConstantInput) {
  NLinear m({3, 4, 4});
  SeriesMatrix x(3, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = 10.0 * static_cast<double>(c + 1);
  const SeriesMatrix y = m.predict(x);
  ASSERT_EQ(y.rows(), 4u);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y(t, c), 10.0 * static_cast<double>(c + 1));
}

TEST(NLinear, ZeroWeightsRepeatLastValueExactly) {
  for (auto mode : {NLinearMode::Individual, NLinearMode::Shared, NLinearMode::Mixing}) {
    NLinear m({5, 3, 4}, mode);
    for (Parameter* p : m.parameters()) p->value.fill(0.0);
    const SeriesMatrix x = random_history(5, 4, 3);
    const SeriesMatrix y = m.predict(x);
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y(t, c), x(4, c));
  }
}

TEST(NLinear, HandComputedExample) {
  NLinear m({3, 2, 1});
  m.weight(0).value = Tensor::matrix({{1, 0, 0}, {0, 0, 1}});
  m.bias(0).value.fill(0.0);
  const SeriesMatrix y = m.predict(SeriesMatrix(3, 1, std::vector<double>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 3.0);
}

TEST(NLinear, ShiftEquivariance) {
  for (auto mode : {NLinearMode::Individual, NLinearMode::Shared, NLinearMode::Mixing}) {
    NLinear m({3, 3, 4}, mode);
    randomize(m, 8);
    const SeriesMatrix x = random_history(3, 4, 1);
    const SeriesMatrix base = m.predict(x);
    for (double k : {-5.0, 0.3, 10.0}) {
      SeriesMatrix shifted = x;
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) shifted(r, c) += k;
      const SeriesMatrix y = m.predict(shifted);
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(y(t, c) - base(t, c), k, 1e-9);
    }
  }
}

TEST(NLinear, IndividualChannelsAreIndependent) {
  NLinear m({3, 2, 4});
  randomize(m, 4);
  const SeriesMatrix x = random_history(3, 4, 2);
  SeriesMatrix perturbed = x;
  perturbed(0, 1) += 3.0;
  perturbed(2, 1) -= 1.0;
  const SeriesMatrix a = m.predict(x);
  const SeriesMatrix b = m.predict(perturbed);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t c : {0u, 2u, 3u}) EXPECT_EQ(a(t, c), b(t, c));
    EXPECT_NE(a(t, 1), b(t, 1));
  }
}

TEST(NLinear, MixingInitMatchesIndividualInit) {
  NLinear ind({3, 3, 4}, NLinearMode::Individual);
  NLinear mix({3, 3, 4}, NLinearMode::Mixing);
  const SeriesMatrix x = random_history(3, 4, 6);
  const SeriesMatrix a = ind.predict(x), b = mix.predict(x);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a(t, c), b(t, c), 1e-12);
  EXPECT_EQ(mix.weight(2).value.shape(), (Shape{3, 12}));
}

TEST(NLinear, RejectsWrongShape) {
  NLinear m({3, 3, 4});
  EXPECT_THROW(m.predict(SeriesMatrix(2, 4)), ShapeError);
  EXPECT_THROW(m.predict(SeriesMatrix(3, 1)), ShapeError);
}

TEST(ITransLite, ParameterCountClosedForm) {
  const ITransLiteOptions defaults;
  ITransLite m({3, 3, 4}, defaults);
  EXPECT_EQ(m.parameter_count(), itrans_count(3, 3, defaults));
  EXPECT_EQ(m.parameter_count(), 17315u);
  const ITransLiteOptions small{8, 2, 1, 16, true};
  EXPECT_EQ(ITransLite({7, 5, 4}, small).parameter_count(), itrans_count(7, 5, small));
  EXPECT_THROW(ITransLite({3, 3, 4}, ITransLiteOptions{30, 4, 1, 8, true}), ConfigError);
}

TEST(ITransLite, MatchesStraightLineOracle) {
  for (bool anchor : {true, false}) {
    for (std::size_t C : {1u, 4u}) {
      ITransLite m({5, 3, C}, ITransLiteOptions{8, 2, 2, 16, anchor});
      m.init(11);
      randomize(m, 12, 0.2);
      const SeriesMatrix x = random_history(5, C, 13);
      const SeriesMatrix y = m.predict(x);
      const Mat expected = oracle_itrans(m, x);
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < C; ++c) EXPECT_NEAR(y(t, c), expected[t][c], 1e-10) << anchor << " " << C;
    }
  }
}

TEST(ITransLite, SingleTokenAttentionIsOne) {
  ITransLite m({3, 3, 1});
  m.init(2);
  m.predict(random_history(3, 1, 2));
  for (const Tensor& a : m.last_attention()) EXPECT_DOUBLE_EQ(a.item(), 1.0);
}

TEST(ITransLite, VariatePermutationEquivariance) {
  ITransLite m({4, 2, 4});
  m.init(3);
  const SeriesMatrix x = random_history(4, 4, 5);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  SeriesMatrix px(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) px(r, c) = x(r, perm[c]);
  const SeriesMatrix y = m.predict(x);
  const SeriesMatrix py = m.predict(px);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(py(t, c), y(t, perm[c]), 1e-12);
}

TEST(ITransLite, ZeroQueryKeyGivesUniformAttention) {
  ITransLite m({3, 3, 4});
  m.init(4);
  for (std::size_t i = 0; i < 2; ++i) {
    for (Parameter* p : {&m.layer(i).wq, &m.layer(i).bq, &m.layer(i).wk, &m.layer(i).bk}) p->value.fill(0.0);
  }
  m.predict(random_history(3, 4, 9));
  ASSERT_EQ(m.last_attention().size(), 4u);
  for (const Tensor& a : m.last_attention())
    for (double v : a.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ITransLite, SeededInitIsDeterministic) {
  ITransLite a({3, 3, 4}), b({3, 3, 4}), c({3, 3, 4});
  a.init(5);
  b.init(5);
  c.init(6);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_NE(pa[0]->value, pc[0]->value);
  EXPECT_EQ(a.layer(1).ln2_gain.value, Tensor(Shape{32}, 1.0));
  const double s = std::sqrt(6.0 / (3.0 + 32.0));
  for (double v : a.embed_weight().value.values()) EXPECT_LE(std::abs(v), s);
}

TEST(Forecasters, GradientsMatchFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    NLinear nl({3, 2, 4}, NLinearMode::Mixing);
    randomize(nl, seed);
    ITransLite it({3, 2, 4}, ITransLiteOptions{8, 2, 1, 16, true});
    it.init(seed);
    // Centered inputs keep the loss O(1) so central differences are not swamped by rounding.
    SeriesMatrix x = random_history(3, 4, seed + 10);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) x(r, c) = (x(r, c) - 70.0) / 10.0;
    for (Forecaster* f : std::vector<Forecaster*>{&nl, &it}) {
      auto loss = [&](Tape& tape) {
        Var in = tape.constant(Tensor(Shape{3, 4}, std::vector<double>(x.values().begin(), x.values().end())));
        return mean(square(f->forward(tape, in)));
      };
      EXPECT_LE(finite_diff_check(loss, f->parameters()).max_relative_error, 1e-4) << f->kind() << " " << seed << " " << finite_diff_check(loss, f->parameters()).worst_parameter;
    }
  }
}

TEST(Forecasters, FactoryAndManifest) {
  ModelSpec spec;
  auto nl = make_forecaster(spec, {3, 3, 4});
  EXPECT_EQ(nl->manifest().at("mode"), "individual");
  spec.kind = "itranslite";
  auto it = make_forecaster(spec, {3, 3, 1});
  EXPECT_EQ(it->manifest().at("channels"), 1);
  spec.kind = "lstm";
  EXPECT_THROW(make_forecaster(spec, {3, 3, 1}), ConfigError);
}
