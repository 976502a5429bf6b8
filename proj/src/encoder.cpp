#include "sourcep/encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace sourcep::encoder {

namespace {

using tokenize::MaskMatrix;
using tokenize::ModelInput;

bool all_finite(const Mat& m) { return m.allFinite(); }

Mat row_broadcast(const Mat& row, Eigen::Index rows) { return row.replicate(rows, 1); }

Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, LayerNormCache& cache) {
  const auto n = x.rows();
  const auto d = x.cols();
  cache.xhat.resize(n, d);
  cache.inv_std.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std(r) = inv;
    cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
  }
  return (cache.xhat.array() * row_broadcast(gain, n).array() + row_broadcast(bias, n).array())
      .matrix();
}

Mat layer_norm_backward(const Mat& dy, const LayerNormCache& cache, const Mat& gain,
                        Mat& d_gain, Mat& d_bias) {
  const auto n = dy.rows();
  d_gain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  d_bias += dy.colwise().sum();
  const Mat dxhat = (dy.array() * row_broadcast(gain, n).array()).matrix();
  Mat dx(n, dy.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void softmax_rows(Mat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp().matrix();
    s.row(r) /= s.row(r).sum();
  }
}

double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

// log(1 + e^x) without overflow
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mat layer_backward(const Mat& d_out, const LayerCache& c, const LayerParams& p, LayerParams& g,
                   std::size_t heads) {
  const auto n = d_out.rows();
  const auto hidden = p.wq.rows();
  const auto dk = hidden / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  const Mat d_r2 = layer_norm_backward(d_out, c.ln2, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  Mat d_u = d_r2;
  g.ff2_w.noalias() += c.ff_act.transpose() * d_r2;
  g.ff2_b += d_r2.colwise().sum();
  const Mat d_act = d_r2 * p.ff2_w.transpose();
  Mat d_pre = d_act;
  for (Eigen::Index i = 0; i < d_pre.size(); ++i) d_pre.data()[i] *= gelu_grad(c.ff_pre.data()[i]);
  g.ff1_w.noalias() += c.u.transpose() * d_pre;
  g.ff1_b += d_pre.colwise().sum();
  d_u.noalias() += d_pre * p.ff1_w.transpose();

  const Mat d_r1 = layer_norm_backward(d_u, c.ln1, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  Mat d_x = d_r1;
  g.wo.noalias() += c.context.transpose() * d_r1;
  const Mat d_ctx = d_r1 * p.wo.transpose();

  Mat d_q(n, hidden), d_k(n, hidden), d_v(n, hidden);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto col = static_cast<Eigen::Index>(h) * dk;
    const Mat& probs = c.probs[h];
    const Mat d_ch = d_ctx.middleCols(col, dk);
    const Mat d_p = d_ch * c.v.middleCols(col, dk).transpose();
    d_v.middleCols(col, dk).noalias() = probs.transpose() * d_ch;
    Mat d_s = probs;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double dot = probs.row(r).dot(d_p.row(r));
      d_s.row(r) = (probs.row(r).array() * (d_p.row(r).array() - dot)).matrix();
    }
    d_s *= scale;
    d_q.middleCols(col, dk).noalias() = d_s * c.k.middleCols(col, dk);
    d_k.middleCols(col, dk).noalias() = d_s.transpose() * c.q.middleCols(col, dk);
  }
  g.wq.noalias() += c.input.transpose() * d_q;
  g.wk.noalias() += c.input.transpose() * d_k;
  g.wv.noalias() += c.input.transpose() * d_v;
  d_x.noalias() += d_q * p.wq.transpose();
  d_x.noalias() += d_k * p.wk.transpose();
  d_x.noalias() += d_v * p.wv.transpose();
  return d_x;
}

}  // namespace

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw EncoderError(EncoderError::Kind::BadConfig, what);
  };
  if (layers == 0) bad("layers must be positive");
  if (hidden == 0 || heads == 0) bad("hidden size and head count must be positive");
  if (hidden % heads != 0)
    bad("hidden size " + std::to_string(hidden) + " is not divisible by " +
        std::to_string(heads) + " heads");
  if (ffn == 0) bad("feed-forward size must be positive");
  if (code_len == 0) bad("code length must be positive");
}

std::vector<std::pair<std::string, Mat*>> EncoderParams::tensors() {
  std::vector<std::pair<std::string, Mat*>> out = {{"token_emb", &token_emb}, {"pos_emb", &pos_emb}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.insert(out.end(), {{p + "wq", &l.wq},
                           {p + "wk", &l.wk},
                           {p + "wv", &l.wv},
                           {p + "wo", &l.wo},
                           {p + "ln1_gain", &l.ln1_gain},
                           {p + "ln1_bias", &l.ln1_bias},
                           {p + "ff1_w", &l.ff1_w},
                           {p + "ff1_b", &l.ff1_b},
                           {p + "ff2_w", &l.ff2_w},
                           {p + "ff2_b", &l.ff2_b},
                           {p + "ln2_gain", &l.ln2_gain},
                           {p + "ln2_bias", &l.ln2_bias}});
  }
  out.insert(out.end(), {{"cls_w", &cls_w}, {"cls_b", &cls_b}, {"lm_bias", &lm_bias}});
  return out;
}

std::vector<std::pair<std::string, const Mat*>> EncoderParams::tensors() const {
  std::vector<std::pair<std::string, const Mat*>> out;
  for (auto& [name, m] : const_cast<EncoderParams*>(this)->tensors()) out.emplace_back(name, m);
  return out;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z = *this;
  for (auto& [name, m] : z.tensors()) m->setZero();
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols())
      return false;
    if (*a[i].second != *b[i].second) return false;
  }
  return true;
}

EncoderParams init_params(const ModelConfig& config, std::size_t vocab_size) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.hidden);
  const auto f = static_cast<Eigen::Index>(config.ffn);
  const auto v = static_cast<Eigen::Index>(vocab_size);
  EncoderParams p;
  p.token_emb.resize(v, d);
  p.pos_emb.resize(static_cast<Eigen::Index>(config.layout().position_count()), d);
  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    l.wq.resize(d, d);
    l.wk.resize(d, d);
    l.wv.resize(d, d);
    l.wo.resize(d, d);
    l.ln1_gain.resize(1, d);
    l.ln1_bias.resize(1, d);
    l.ff1_w.resize(d, f);
    l.ff1_b.resize(1, f);
    l.ff2_w.resize(f, d);
    l.ff2_b.resize(1, d);
    l.ln2_gain.resize(1, d);
    l.ln2_bias.resize(1, d);
  }
  p.cls_w.resize(d, 2);
  p.cls_b.resize(1, 2);
  p.lm_bias.resize(1, v);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (auto& [name, m] : p.tensors()) {
    if (ends_with(name, "_gain")) {
      m->setOnes();
    } else if (ends_with(name, "_b") || ends_with(name, "_bias")) {
      m->setZero();
    } else {
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal(rng);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

Mat embed(const ModelInput& input, const EncoderParams& params, std::size_t rows) {
  const std::size_t n = rows == 0 ? input.length() : rows;
  Mat w(static_cast<Eigen::Index>(n), params.token_emb.cols());
  for (std::size_t t = 0; t < n; ++t) {
    const int id = input.token_ids.at(t);
    const int pos = input.position_ids.at(t);
    if (id < 0 || id >= params.token_emb.rows())
      throw EncoderError(EncoderError::Kind::IdOutOfRange,
                         "token id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(params.token_emb.rows()));
    if (pos < 0 || pos >= params.pos_emb.rows())
      throw EncoderError(EncoderError::Kind::IdOutOfRange,
                         "position id " + std::to_string(pos) + " outside table of " +
                             std::to_string(params.pos_emb.rows()));
    w.row(static_cast<Eigen::Index>(t)) = params.token_emb.row(id) + params.pos_emb.row(pos);
  }
  return w;
}

Mat layer_forward(const Mat& x, const MaskMatrix& mask, const LayerParams& p, std::size_t heads,
                  LayerCache* cache) {
  const auto n = x.rows();
  const auto hidden = x.cols();
  const auto dk = hidden / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  if (static_cast<std::size_t>(n) > mask.size())
    throw EncoderError(EncoderError::Kind::ShapeMismatch, "mask smaller than the sequence");

  LayerCache local;
  LayerCache& c = cache ? *cache : local;
  c.input = x;
  c.q = x * p.wq;
  c.k = x * p.wk;
  c.v = x * p.wv;
  c.probs.assign(heads, Mat());
  c.context.resize(n, hidden);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto col = static_cast<Eigen::Index>(h) * dk;
    Mat s = (c.q.middleCols(col, dk) * c.k.middleCols(col, dk).transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (!mask.allowed(static_cast<std::size_t>(i), static_cast<std::size_t>(j)))
          s(i, j) += kForbidden;
    softmax_rows(s);
    c.context.middleCols(col, dk).noalias() = s * c.v.middleCols(col, dk);
    c.probs[h] = std::move(s);
  }
  const Mat r1 = c.context * p.wo + x;
  c.u = layer_norm(r1, p.ln1_gain, p.ln1_bias, c.ln1);
  c.ff_pre = c.u * p.ff1_w + row_broadcast(p.ff1_b, n);
  c.ff_act = c.ff_pre.unaryExpr([](double v) { return gelu(v); });
  const Mat r2 = c.ff_act * p.ff2_w + row_broadcast(p.ff2_b, n) + c.u;
  Mat out = layer_norm(r2, p.ln2_gain, p.ln2_bias, c.ln2);
  if (!all_finite(out))
    throw EncoderError(EncoderError::Kind::NonFiniteActivation, "non-finite layer output");
  return out;
}

Mat encode(const ModelInput& input, const MaskMatrix& mask, const EncoderParams& params,
           const ModelConfig& config, ForwardCache* cache) {
  const std::size_t n = input.active_length();
  Mat x = embed(input, params, n);
  if (cache) cache->layers.assign(params.layers.size(), LayerCache{});
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    x = layer_forward(x, mask, params.layers[l], config.heads, cache ? &cache->layers[l] : nullptr);
  return x;
}

Eigen::RowVector2d class_logits(const Mat& hidden, const EncoderParams& params) {
  return hidden.row(0) * params.cls_w + params.cls_b;
}

Prediction predict_from_logits(const Eigen::RowVector2d& logits, double threshold) {
  Prediction p;
  const double mx = logits.maxCoeff();
  const double e0 = std::exp(logits(0) - mx);
  const double e1 = std::exp(logits(1) - mx);
  p.probabilities[0] = e0 / (e0 + e1);
  p.probabilities[1] = e1 / (e0 + e1);
  p.threshold = threshold;
  p.label = p.probabilities[1] >= threshold ? 1 : 0;
  return p;
}

Prediction forward(const ModelInput& input, const EncoderParams& params, const ModelConfig& config,
                   double threshold) {
  const auto mask = tokenize::build_mask(input);
  const Mat hidden = encode(input, mask, params, config);
  return predict_from_logits(class_logits(hidden, params), threshold);
}

// ---------------------------------------------------------------------------

double head_loss(const Mat& hidden, const Objective& objective, const EncoderParams& params,
                 Mat* d_hidden, EncoderParams* grads) {
  if (d_hidden) d_hidden->setZero(hidden.rows(), hidden.cols());

  if (const auto* cls = std::get_if<ClassTarget>(&objective)) {
    const Eigen::RowVector2d logits = class_logits(hidden, params);
    const double lse = log_sum_exp(logits);
    const double loss = lse - logits(cls->label);
    if (d_hidden) {
      Eigen::RowVector2d d = (logits.array() - lse).exp().matrix();
      d(cls->label) -= 1.0;
      grads->cls_w.noalias() += hidden.row(0).transpose() * d;
      grads->cls_b += d;
      d_hidden->row(0).noalias() += d * params.cls_w.transpose();
    }
    return loss;
  }

  if (const auto* tok = std::get_if<TokenTargets>(&objective)) {
    if (tok->targets.empty())
      throw EncoderError(EncoderError::Kind::NoTargets, "token objective without targets");
    const double inv = 1.0 / static_cast<double>(tok->targets.size());
    double loss = 0;
    for (const auto& [pos, id] : tok->targets) {
      const auto r = static_cast<Eigen::Index>(pos);
      const Eigen::RowVectorXd logits =
          hidden.row(r) * params.token_emb.transpose() + params.lm_bias;
      const double lse = log_sum_exp(logits);
      loss += (lse - logits(id)) * inv;
      if (d_hidden) {
        Eigen::RowVectorXd d = (logits.array() - lse).exp().matrix() * inv;
        d(id) -= inv;
        grads->token_emb.noalias() += d.transpose() * hidden.row(r);
        grads->lm_bias += d;
        d_hidden->row(r).noalias() += d * params.token_emb;
      }
    }
    return loss;
  }

  const auto& pairs = std::get<PairTargets>(objective);
  double loss = 0;
  for (const auto& c : pairs.candidates) {
    const auto i = static_cast<Eigen::Index>(c.first);
    const auto j = static_cast<Eigen::Index>(c.second);
    const double s = hidden.row(i).dot(hidden.row(j));
    loss += c.label ? softplus(-s) : softplus(s);
    if (d_hidden) {
      const double ds = sigmoid(s) - c.label;
      const Eigen::RowVectorXd hi = hidden.row(i);
      const Eigen::RowVectorXd hj = hidden.row(j);
      d_hidden->row(i) += ds * hj;
      d_hidden->row(j) += ds * hi;
    }
  }
  return loss;
}

void backward(const ModelInput& input, const ForwardCache& cache, const EncoderParams& params,
              const ModelConfig& config, const Mat& d_hidden, EncoderParams& grads) {
  Mat d = d_hidden;
  for (std::size_t l = params.layers.size(); l-- > 0;)
    d = layer_backward(d, cache.layers[l], params.layers[l], grads.layers[l], config.heads);
  for (Eigen::Index t = 0; t < d.rows(); ++t) {
    grads.token_emb.row(input.token_ids[static_cast<std::size_t>(t)]) += d.row(t);
    grads.pos_emb.row(input.position_ids[static_cast<std::size_t>(t)]) += d.row(t);
  }
}

LossAndGrads loss_and_grads(const std::vector<Sample>& batch, const EncoderParams& params,
                            const ModelConfig& config) {
  if (batch.empty()) throw EncoderError(EncoderError::Kind::ShapeMismatch, "empty batch");
  LossAndGrads out{0.0, params.zeros_like()};
  for (const auto& sample : batch) {
    ForwardCache cache;
    const Mat hidden = encode(sample.input, sample.mask, params, config, &cache);
    Mat d_hidden;
    out.loss += head_loss(hidden, sample.objective, params, &d_hidden, &out.grads);
    backward(sample.input, cache, params, config, d_hidden, out.grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (auto& [name, m] : out.grads.tensors()) {
    *m *= inv;
    if (!m->allFinite())
      throw EncoderError(EncoderError::Kind::NonFiniteGradient, "non-finite gradient in " + name);
  }
  if (!std::isfinite(out.loss))
    throw EncoderError(EncoderError::Kind::NonFiniteGradient, "non-finite loss");
  return out;
}

double loss_only(const Sample& sample, const EncoderParams& params, const ModelConfig& config) {
  const Mat hidden = encode(sample.input, sample.mask, params, config);
  return head_loss(hidden, sample.objective, params);
}

// ---------------------------------------------------------------------------

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               const AdamConfig& adam) {
  auto pt = params.tensors();
  const auto gt = grads.tensors();
  auto shape_error = [] {
    throw EncoderError(EncoderError::Kind::ShapeMismatch, "gradient shape does not match parameters");
  };
  if (pt.size() != gt.size()) shape_error();
  for (std::size_t i = 0; i < pt.size(); ++i)
    if (pt[i].second->rows() != gt[i].second->rows() || pt[i].second->cols() != gt[i].second->cols())
      shape_error();
  if (state.step == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  auto mt = state.m.tensors();
  auto vt = state.v.tensors();
  for (std::size_t i = 0; i < pt.size(); ++i) {
    auto m = mt[i].second->array();
    auto v = vt[i].second->array();
    const auto g = gt[i].second->array();
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g.square();
    pt[i].second->array() -= lr * (m / c1) / ((v / c2).sqrt() + adam.eps);
  }
}

}  // namespace sourcep::encoder
