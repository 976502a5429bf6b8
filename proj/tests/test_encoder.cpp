#include "sourcep/checkpoint.hpp"
#include "sourcep/encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/tiny_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace sourcep::encoder;
using sourcep::tokenize::MaskMatrix;
using sourcep::tokenize::ModelInput;

namespace {

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

LayerParams random_layer(std::mt19937_64& rng, Eigen::Index d, Eigen::Index f) {
  LayerParams l;
  l.wq = random_mat(rng, d, d, 0.5);
  l.wk = random_mat(rng, d, d, 0.5);
  l.wv = random_mat(rng, d, d, 0.5);
  l.wo = random_mat(rng, d, d, 0.5);
  l.ln1_gain = random_mat(rng, 1, d);
  l.ln1_bias = random_mat(rng, 1, d);
  l.ff1_w = random_mat(rng, d, f, 0.5);
  l.ff1_b = random_mat(rng, 1, f);
  l.ff2_w = random_mat(rng, f, d, 0.5);
  l.ff2_b = random_mat(rng, 1, d);
  l.ln2_gain = random_mat(rng, 1, d);
  l.ln2_bias = random_mat(rng, 1, d);
  return l;
}

using Table = std::vector<std::vector<double>>;

Table to_table(const Mat& m) {
  Table t(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[i][j] = m(i, j);
  return t;
}

Table matmul(const Table& a, const Table& b) {
  Table c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

std::vector<double> norm_row(const std::vector<double>& x, const Table& gain, const Table& bias) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = gain[0][i] * (x[i] - mean) / std::sqrt(var + 1e-12) + bias[0][i];
  return y;
}

// Per-entry evaluation of one layer with plain loops.
Table brute_layer(const Table& x, const MaskMatrix& mask, const LayerParams& p, std::size_t heads) {
  const std::size_t n = x.size(), d = x[0].size(), dk = d / heads;
  const Table q = matmul(x, to_table(p.wq)), k = matmul(x, to_table(p.wk)),
              v = matmul(x, to_table(p.wv));
  Table ctx(n, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> score(n);
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) s += q[i][c] * k[j][c];
        score[j] = s / std::sqrt(static_cast<double>(dk)) + (mask.allowed(i, j) ? 0.0 : -1e9);
      }
      const double mx = *std::max_element(score.begin(), score.end());
      double z = 0;
      for (auto& s : score) z += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) ctx[i][c] += score[j] / z * v[j][c];
    }
  }
  const Table attn = matmul(ctx, to_table(p.wo));
  Table u(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(d);
    for (std::size_t c = 0; c < d; ++c) r[c] = attn[i][c] + x[i][c];
    u[i] = norm_row(r, to_table(p.ln1_gain), to_table(p.ln1_bias));
  }
  const Table w1 = to_table(p.ff1_w), b1 = to_table(p.ff1_b), w2 = to_table(p.ff2_w),
              b2 = to_table(p.ff2_b);
  Table out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> hid(w1[0].size());
    for (std::size_t j = 0; j < hid.size(); ++j) {
      double s = b1[0][j];
      for (std::size_t c = 0; c < d; ++c) s += u[i][c] * w1[c][j];
      hid[j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
    }
    std::vector<double> r(d);
    for (std::size_t c = 0; c < d; ++c) {
      double s = b2[0][c];
      for (std::size_t j = 0; j < hid.size(); ++j) s += hid[j] * w2[j][c];
      r[c] = s + u[i][c];
    }
    out[i] = norm_row(r, to_table(p.ln2_gain), to_table(p.ln2_bias));
  }
  return out;
}

MaskMatrix random_mask(std::mt19937_64& rng, std::size_t n) {
  MaskMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, rng() % 2 == 0);
    m.set(i, i, true);
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

TEST(Embed, ZeroTablesGiveZeros) {
  auto s = sourcep::testing::tiny_setup();
  s.params.token_emb.setZero();
  s.params.pos_emb.setZero();
  EXPECT_TRUE(embed(s.input, s.params).isZero(0.0));
}

TEST(Embed, OneHotTokenTable) {
  auto s = sourcep::testing::tiny_setup();
  s.params.token_emb.setZero();
  for (Eigen::Index i = 0; i < s.params.token_emb.rows(); ++i)
    s.params.token_emb(i, i % s.params.token_emb.cols()) = 1.0;
  s.params.pos_emb.setZero();
  const Mat w = embed(s.input, s.params);
  for (Eigen::Index r = 0; r < w.rows(); ++r) EXPECT_DOUBLE_EQ(w.row(r).norm(), 1.0);
}

TEST(Embed, MatchesRecomputation) {
  const auto s = sourcep::testing::tiny_setup();
  const Mat w = embed(s.input, s.params);
  ASSERT_EQ(static_cast<std::size_t>(w.rows()), s.input.length());
  for (std::size_t t = 0; t < s.input.length(); ++t)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      EXPECT_EQ(w(t, c), s.params.token_emb(s.input.token_ids[t], c) +
                             s.params.pos_emb(s.input.position_ids[t], c));
}

TEST(Embed, IdOutOfRange) {
  auto s = sourcep::testing::tiny_setup();
  s.input.token_ids[1] = static_cast<int>(s.vocab.size());
  try {
    embed(s.input, s.params);
    FAIL();
  } catch (const EncoderError& e) {
    EXPECT_EQ(e.kind(), EncoderError::Kind::IdOutOfRange);
  }
}

// ---------------------------------------------------------------------------
// layer_forward
// ---------------------------------------------------------------------------

TEST(Layer, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat x = random_mat(rng, 4, 8);
    const auto layer = random_layer(rng, 8, 12);
    const auto mask = random_mask(rng, 4);
    const Mat got = layer_forward(x, mask, layer, 2);
    const Table want = brute_layer(to_table(x), mask, layer, 2);
    for (Eigen::Index i = 0; i < 4; ++i)
      for (Eigen::Index j = 0; j < 8; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-10);
  }
}

TEST(Layer, SelfOnlyRowReturnsOwnValue) {
  std::mt19937_64 rng(9);
  const Mat x = random_mat(rng, 5, 8);
  const auto layer = random_layer(rng, 8, 8);
  MaskMatrix mask(5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) mask.set(i, j, i != 2 || j == 2);
  LayerCache cache;
  layer_forward(x, mask, layer, 2, &cache);
  for (Eigen::Index c = 0; c < 8; ++c) EXPECT_NEAR(cache.context(2, c), cache.v(2, c), 1e-15);
}

TEST(Layer, IdenticalKeysGiveUniformWeights) {
  std::mt19937_64 rng(10);
  const Mat row = random_mat(rng, 1, 8);
  const Mat x = row.replicate(6, 1);
  const auto layer = random_layer(rng, 8, 8);
  MaskMatrix mask(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) mask.set(i, j, true);
  LayerCache cache;
  layer_forward(x, mask, layer, 2, &cache);
  for (const auto& p : cache.probs) EXPECT_TRUE(p.isApproxToConstant(1.0 / 6.0, 1e-12));
}

TEST(LayerProperty, ForbiddenKeysGetNoWeight) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    const Mat x = random_mat(rng, static_cast<Eigen::Index>(n), 8, 3.0);
    const auto layer = random_layer(rng, 8, 8);
    const auto mask = random_mask(rng, n);
    LayerCache cache;
    layer_forward(x, mask, layer, 2, &cache);
    for (const auto& p : cache.probs) {
      for (std::size_t i = 0; i < n; ++i) {
        double allowed = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (mask.allowed(i, j)) allowed += p(i, j);
          else EXPECT_LT(p(i, j), 1e-12);
        }
        EXPECT_NEAR(allowed, 1.0, 1e-9);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// forward / prediction
// ---------------------------------------------------------------------------

TEST(Forward, ZeroClassifierIsUndecided) {
  auto s = sourcep::testing::tiny_setup();
  s.params.cls_w.setZero();
  s.params.cls_b.setZero();
  const auto p = forward(s.input, s.params, s.config, 0.5);
  EXPECT_DOUBLE_EQ(p.probabilities[0], 0.5);
  EXPECT_DOUBLE_EQ(p.probabilities[1], 0.5);
  EXPECT_EQ(p.label, 1);
  EXPECT_EQ(forward(s.input, s.params, s.config, 0.51).label, 0);
}

TEST(Forward, LowThresholdFlipsLabel) {
  // positive probability 0.01
  const Eigen::RowVector2d logits(0.0, std::log(0.01 / 0.99));
  const auto p = predict_from_logits(logits, 0.003);
  EXPECT_NEAR(p.positive(), 0.01, 1e-12);
  EXPECT_EQ(p.label, 1);
  EXPECT_EQ(predict_from_logits(logits, 0.5).label, 0);
  EXPECT_NEAR(p.probabilities[0] + p.probabilities[1], 1.0, 1e-9);
}

TEST(Forward, Deterministic) {
  const auto a = sourcep::testing::tiny_setup(5);
  const auto b = sourcep::testing::tiny_setup(5);
  EXPECT_TRUE(a.params == b.params);
  const auto pa = forward(a.input, a.params, a.config);
  const auto pb = forward(b.input, b.params, b.config);
  EXPECT_EQ(pa.probabilities[1], pb.probabilities[1]);
  EXPECT_FALSE(sourcep::testing::tiny_setup(6).params == a.params);
}

TEST(ForwardProperty, NodeOrderDoesNotMatter) {
  const auto s = sourcep::testing::tiny_setup(12);
  const auto& in = s.input;
  const std::size_t f = in.first_node_position();
  std::vector<std::size_t> perm(in.node_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    auto moved = [&](std::size_t pos) { return pos >= f && pos < f + in.node_count ? f + perm[pos - f] : pos; };
    ModelInput out = in;
    for (std::size_t i = 0; i < in.node_count; ++i) {
      out.token_ids[f + perm[i]] = in.token_ids[f + i];
      out.position_ids[f + perm[i]] = in.position_ids[f + i];
    }
    for (auto& [a, b] : out.dfg_edges) a = moved(a), b = moved(b);
    for (auto& [node, code] : out.node_alignment) node = moved(node);
    const Mat h0 = encode(in, sourcep::tokenize::build_mask(in), s.params, s.config);
    const Mat h1 = encode(out, sourcep::tokenize::build_mask(out), s.params, s.config);
    const auto l0 = class_logits(h0, s.params);
    const auto l1 = class_logits(h1, s.params);
    EXPECT_NEAR(l0(0), l1(0), 1e-8);
    EXPECT_NEAR(l0(1), l1(1), 1e-8);
  }
}

TEST(ForwardProperty, DataFlowEdgesAreLive) {
  // node-to-node attention reaches [CLS] only through a second layer
  auto s = sourcep::testing::tiny_setup(13);
  s.config.layers = 2;
  const auto params = init_params(s.config, s.vocab.size());
  auto no_edges = s.input;
  no_edges.dfg_edges.clear();
  const auto a = forward(s.input, params, s.config);
  const auto b = forward(no_edges, params, s.config);
  EXPECT_NE(a.probabilities[1], b.probabilities[1]);
}

// ---------------------------------------------------------------------------
// losses and gradients
// ---------------------------------------------------------------------------

TEST(Gradients, MatchFiniteDifferencesForEveryObjective) {
  const auto s = sourcep::testing::tiny_setup();
  ASSERT_LE(s.input.length(), 12u);
  for (const auto& [objective, sample] : sourcep::testing::tiny_objectives(s)) {
    for (const auto& check : sourcep::testing::gradient_check(sample, s.params, s.config)) {
      EXPECT_LT(check.max_rel_err, 1e-4) << objective << " / " << check.name;
    }
  }
}

TEST(Loss, ConfidentCorrectClassification) {
  auto s = sourcep::testing::tiny_setup();
  s.params.cls_w.setZero();
  s.params.cls_b << 0.0, 40.0;
  const Mat h = encode(s.input, sourcep::tokenize::build_mask(s.input), s.params, s.config);
  EXPECT_LT(head_loss(h, ClassTarget{1}, s.params), 1e-6);
  EXPECT_NEAR(head_loss(h, ClassTarget{0}, s.params), 40.0, 1e-9);
}

TEST(Loss, UniformVocabularyGivesLogV) {
  auto s = sourcep::testing::tiny_setup();
  s.params.token_emb.setZero();
  s.params.lm_bias.setZero();
  const Mat h = Mat::Random(s.input.active_length(), 8);
  const double v = static_cast<double>(s.vocab.size());
  EXPECT_NEAR(head_loss(h, TokenTargets{{{1, 5}, {2, 6}}}, s.params), std::log(v), 1e-12);
  EXPECT_THROW(head_loss(h, TokenTargets{}, s.params), EncoderError);
}

TEST(Loss, PairLossValues) {
  auto s = sourcep::testing::tiny_setup();
  Mat h = Mat::Zero(4, 8);
  h(0, 0) = 1;
  h(1, 1) = 1;
  // orthogonal rows: p = 0.5 either way
  EXPECT_NEAR(head_loss(h, PairTargets{{{0, 1, 1}, {0, 1, 0}}}, s.params), 2 * std::log(2.0), 1e-12);
  // identical rows with squared norm 10
  h.row(2).setZero();
  h(2, 0) = std::sqrt(10.0);
  h.row(3) = h.row(2);
  EXPECT_NEAR(head_loss(h, PairTargets{{{2, 3, 1}}}, s.params), std::log1p(std::exp(-10.0)), 1e-15);
  EXPECT_EQ(head_loss(h, PairTargets{}, s.params), 0.0);
}

TEST(Loss, DuplicatedBatchKeepsTheMean) {
  const auto s = sourcep::testing::tiny_setup();
  const auto samples = sourcep::testing::tiny_objectives(s);
  const auto& one = samples[0].second;
  const auto single = loss_and_grads({one}, s.params, s.config);
  const auto twice = loss_and_grads({one, one}, s.params, s.config);
  EXPECT_NEAR(single.loss, twice.loss, 1e-14);
  const auto a = single.grads.tensors();
  const auto b = twice.grads.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i].second->isApprox(*b[i].second, 1e-12));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParams) {
  auto s = sourcep::testing::tiny_setup();
  const auto before = s.params;
  AdamState state;
  adam_step(s.params, s.params.zeros_like(), state, 1e-3);
  EXPECT_TRUE(s.params == before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, FirstStepByHand) {
  auto s = sourcep::testing::tiny_setup();
  const auto before = s.params;
  auto g = s.params.zeros_like();
  g.cls_b << 0.3, -2.0;
  AdamState state;
  const double lr = 2e-5;
  adam_step(s.params, g, state, lr);
  // m_hat = g, v_hat = g^2
  EXPECT_NEAR(s.params.cls_b(0) - before.cls_b(0), -lr * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(s.params.cls_b(1) - before.cls_b(1), lr * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  auto s = sourcep::testing::tiny_setup();
  auto g = s.params.zeros_like();
  g.cls_b << 5.0, -1e-3;
  AdamState state;
  const double lr = 1e-3;
  for (int i = 0; i < 200; ++i) {
    const auto prev = s.params.cls_b;
    adam_step(s.params, g, state, lr);
    const Mat step = s.params.cls_b - prev;
    EXPECT_NEAR(std::abs(step(0)), lr, 1e-9);
    EXPECT_NEAR(std::abs(step(1)), lr, 1e-7);
  }
}

TEST(Adam, ShapeMismatch) {
  auto s = sourcep::testing::tiny_setup();
  auto g = s.params.zeros_like();
  g.cls_w.resize(3, 3);
  AdamState state;
  EXPECT_THROW(adam_step(s.params, g, state, 1e-3), EncoderError);
}

// ---------------------------------------------------------------------------
// config / checkpoint
// ---------------------------------------------------------------------------

TEST(Config, Validation) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), EncoderError);
  c = ModelConfig{};
  c.layers = 12;
  c.hidden = 768;
  c.heads = 12;
  EXPECT_NO_THROW(c.validate());
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto s = sourcep::testing::tiny_setup();
  sourcep::Checkpoint ck{s.config, s.vocab, s.params};
  const auto bytes = ck.serialize();
  EXPECT_EQ(bytes.substr(0, 8), "SRCPCKPT");
  const auto back = sourcep::Checkpoint::deserialize(bytes);
  EXPECT_EQ(back.config, s.config);
  EXPECT_EQ(back.vocab, s.vocab);
  EXPECT_TRUE(back.params == s.params);
  EXPECT_EQ(back.serialize(), bytes);
  const sourcep::Checkpoint again{s.config, s.vocab, sourcep::testing::tiny_setup().params};
  EXPECT_EQ(again.serialize(), bytes);
}

TEST(Checkpoint, RejectsDamage) {
  const auto s = sourcep::testing::tiny_setup();
  const auto bytes = sourcep::Checkpoint{s.config, s.vocab, s.params}.serialize();
  auto expect_kind = [](std::string_view b, sourcep::CheckpointError::Kind kind) {
    try {
      sourcep::Checkpoint::deserialize(b);
      ADD_FAILURE();
    } catch (const sourcep::CheckpointError& e) {
      EXPECT_EQ(e.kind(), kind);
    }
  };
  expect_kind("NOTACKPT", sourcep::CheckpointError::Kind::BadMagic);
  expect_kind(std::string_view(bytes).substr(0, bytes.size() - 3),
              sourcep::CheckpointError::Kind::Corrupt);
  auto wrong_version = bytes;
  wrong_version[8] = 9;
  expect_kind(wrong_version, sourcep::CheckpointError::Kind::BadVersion);
  expect_kind(bytes + "x", sourcep::CheckpointError::Kind::Corrupt);
}
