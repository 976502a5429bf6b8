#pragma once

#include "sourcep/error.hpp"
#include "sourcep/tokenize.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sourcep::encoder {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class EncoderError : public Error {
public:
  enum class Kind {
    IdOutOfRange,
    NonFiniteActivation,
    NonFiniteGradient,
    ShapeMismatch,
    NoTargets,
    BadConfig
  };
  EncoderError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t code_len = 256;
  std::size_t flow_len = 64;
  std::uint64_t seed = 42;
  bool use_dataflow = true;

  std::size_t head_dim() const noexcept { return hidden / heads; }
  tokenize::InputLayout layout() const noexcept { return {code_len, flow_len}; }
  /// Throws EncoderError::BadConfig unless hidden = heads * head_dim etc.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Mat wq, wk, wv;  // hidden x hidden; head h owns columns [h*dk, (h+1)*dk)
  Mat wo;          // hidden x hidden
  Mat ln1_gain, ln1_bias;
  Mat ff1_w, ff1_b;  // hidden x ffn, 1 x ffn
  Mat ff2_w, ff2_b;  // ffn x hidden, 1 x hidden
  Mat ln2_gain, ln2_bias;
};

struct EncoderParams {
  Mat token_emb;  // vocab x hidden, also the MLM output projection
  Mat pos_emb;    // positions x hidden
  std::vector<LayerParams> layers;
  Mat cls_w;    // hidden x 2
  Mat cls_b;    // 1 x 2
  Mat lm_bias;  // 1 x vocab

  /// Every tensor with a stable name, in serialization order.
  std::vector<std::pair<std::string, Mat*>> tensors();
  std::vector<std::pair<std::string, const Mat*>> tensors() const;

  /// Same shapes, all zeros.
  EncoderParams zeros_like() const;
  std::size_t parameter_count() const;
  bool operator==(const EncoderParams& other) const;
};

/// normal(0, 0.02) weights, zero biases, unit layer-norm gains.
EncoderParams init_params(const ModelConfig& config, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kForbidden = -1e9;

/// Token plus position embedding for the first `rows` positions (all if 0).
Mat embed(const tokenize::ModelInput& input, const EncoderParams& params, std::size_t rows = 0);

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

struct LayerCache {
  Mat input;
  Mat q, k, v;
  std::vector<Mat> probs;  // per head, rows x rows
  Mat context;
  LayerNormCache ln1;
  Mat u;
  Mat ff_pre;
  Mat ff_act;
  LayerNormCache ln2;
};

/// One encoder layer over `x` (rows = positions). The leading rows x rows
/// block of `mask` gives attention permissions.
Mat layer_forward(const Mat& x, const tokenize::MaskMatrix& mask, const LayerParams& layer,
                  std::size_t heads, LayerCache* cache = nullptr);

struct ForwardCache {
  std::vector<LayerCache> layers;
};

/// Final hidden states of the non-pad prefix (active_length x hidden).
Mat encode(const tokenize::ModelInput& input, const tokenize::MaskMatrix& mask,
           const EncoderParams& params, const ModelConfig& config, ForwardCache* cache = nullptr);

/// Classifier logits read from the [CLS] row.
Eigen::RowVector2d class_logits(const Mat& hidden, const EncoderParams& params);

struct Prediction {
  double probabilities[2] = {0.5, 0.5};
  int label = 0;
  double threshold = 0.5;

  double positive() const noexcept { return probabilities[1]; }
};

/// Label is 1 iff the positive-class probability is >= threshold.
Prediction predict_from_logits(const Eigen::RowVector2d& logits, double threshold);

Prediction forward(const tokenize::ModelInput& input, const EncoderParams& params,
                   const ModelConfig& config, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Objectives and gradients
// ---------------------------------------------------------------------------

struct ClassTarget {
  int label = 0;
};

/// Cross-entropy over the vocabulary at each (position, original id).
struct TokenTargets {
  std::vector<std::pair<std::size_t, int>> targets;
};

/// One scored pair for the dot-product link objectives.
struct PairCandidate {
  std::size_t first = 0;   // sequence position
  std::size_t second = 0;  // sequence position
  int label = 0;

  bool operator==(const PairCandidate&) const = default;
};

/// Summed binary cross-entropy of sigmoid(h_first . h_second).
struct PairTargets {
  std::vector<PairCandidate> candidates;
};

using Objective = std::variant<ClassTarget, TokenTargets, PairTargets>;

struct Sample {
  tokenize::ModelInput input;
  tokenize::MaskMatrix mask;
  Objective objective;
};

/// Loss on final hidden states; writes dLoss/dHidden into `d_hidden` and
/// head-parameter gradients into `grads` when given.
double head_loss(const Mat& hidden, const Objective& objective, const EncoderParams& params,
                 Mat* d_hidden = nullptr, EncoderParams* grads = nullptr);

/// Back-propagates dLoss/dHidden through the encoder into `grads`.
void backward(const tokenize::ModelInput& input, const ForwardCache& cache,
              const EncoderParams& params, const ModelConfig& config, const Mat& d_hidden,
              EncoderParams& grads);

struct LossAndGrads {
  double loss = 0;
  EncoderParams grads;
};

/// Mean loss over the batch with matching mean gradients.
LossAndGrads loss_and_grads(const std::vector<Sample>& batch, const EncoderParams& params,
                            const ModelConfig& config);

/// Loss only, no gradient bookkeeping.
double loss_only(const Sample& sample, const EncoderParams& params, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  EncoderParams m;
  EncoderParams v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam. A fresh state is shaped on first use.
void adam_step(EncoderParams& params, const EncoderParams& grads, AdamState& state, double lr,
               const AdamConfig& adam = {});

}  // namespace sourcep::encoder
