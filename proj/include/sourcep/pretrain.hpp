#pragma once

#include "sourcep/encoder.hpp"
#include "sourcep/tokenize.hpp"

#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace sourcep::pretrain {

using Rng = std::mt19937_64;
using Position = std::size_t;
using PositionPair = std::pair<Position, Position>;

/// Generator for one (sample, task) draw; independent of iteration order.
Rng task_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample, std::uint64_t task);

// ---------------------------------------------------------------------------
// Masked language modelling
// ---------------------------------------------------------------------------

enum class Corruption { Masked, Randomized, Kept };

struct MlmBatch {
  tokenize::ModelInput input;                 // corrupted copy
  std::vector<std::pair<Position, int>> targets;  // (position, original id), ascending
  std::vector<Corruption> corruption;         // parallel to targets
};

/// round(rate * code tokens), at least 1; of those 80% become [MASK], 10% a
/// uniformly drawn non-reserved id, 10% stay. Only code positions are drawn.
MlmBatch sample_mlm(const tokenize::ModelInput& input, std::size_t vocab_size, Rng& rng,
                    double rate = 0.15);

// ---------------------------------------------------------------------------
// Edge prediction / node alignment
// ---------------------------------------------------------------------------

struct LinkBatch {
  std::vector<Position> sampled;         // sampled node positions, ascending
  std::vector<PositionPair> masked;      // hidden true links
  std::vector<encoder::PairCandidate> positives;
  std::vector<encoder::PairCandidate> negatives;
  tokenize::MaskMatrix mask;             // base mask with the hidden links forbidden

  std::vector<encoder::PairCandidate> candidates() const;
};

/// Nodes to sample: round(rate * nodes), at least 1 (0 when there are none).
std::size_t sampled_node_count(std::size_t nodes, double rate = 0.2);

/// Ordered node pairs (a, b), a != b, with a or b sampled.
std::set<PositionPair> edge_candidates(const tokenize::ModelInput& input,
                                       const std::vector<Position>& sampled);

/// Samples nodes, hides the data-flow edges touching them (self-loops stay,
/// since a node always sees itself), and draws as many non-edge candidates
/// as hidden edges. If non-edges run short, positives are subsampled instead.
LinkBatch sample_edge_mask(const tokenize::ModelInput& input, const tokenize::MaskMatrix& base,
                           Rng& rng, double rate = 0.2);

/// Same over (sampled node, code position) pairs and the node alignment.
LinkBatch sample_align_mask(const tokenize::ModelInput& input, const tokenize::MaskMatrix& base,
                            Rng& rng, double rate = 0.2);

double mlm_loss(const encoder::Mat& hidden, const MlmBatch& batch,
                const encoder::EncoderParams& params);
double edgepred_loss(const encoder::Mat& hidden, const LinkBatch& batch);
double nodealign_loss(const encoder::Mat& hidden, const LinkBatch& batch);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct PretrainConfig {
  bool mlm = true;
  bool edgepred = true;
  bool nodealign = true;
  double mlm_weight = 1.0;
  double edgepred_weight = 1.0;
  double nodealign_weight = 1.0;
  double lr = 1e-4;
  std::uint64_t seed = 42;
};

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t sample = 0;
  double mlm = 0;
  double edgepred = 0;
  double nodealign = 0;
  double total = 0;

  bool operator==(const LossRecord&) const = default;
};

/// Task losses for one sample without updating anything.
LossRecord sample_losses(const tokenize::ModelInput& input, std::size_t sample,
                         std::size_t epoch, const encoder::EncoderParams& params,
                         const encoder::ModelConfig& model, const PretrainConfig& config);

/// One pass over the corpus in a seeded order, one Adam step per sample on
/// the weighted sum of the enabled task losses.
std::vector<LossRecord> pretrain_epoch(const std::vector<tokenize::ModelInput>& corpus,
                                       encoder::EncoderParams& params, encoder::AdamState& adam,
                                       const encoder::ModelConfig& model,
                                       const PretrainConfig& config, std::size_t epoch);

}  // namespace sourcep::pretrain
