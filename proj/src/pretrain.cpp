#include "sourcep/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sourcep::pretrain {

namespace {

using encoder::PairCandidate;
using tokenize::ModelInput;

enum Task : std::uint64_t { kMlm = 0, kEdge = 1, kAlign = 2, kOrder = 3 };

template <class T>
std::vector<T> choose(std::vector<T> pool, std::size_t k, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(k, pool.size()));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<Position> node_positions(const ModelInput& input) {
  std::vector<Position> out(input.node_count);
  std::iota(out.begin(), out.end(), input.first_node_position());
  return out;
}

// Balanced positives/negatives; `masked` must be sorted.
void balance(LinkBatch& batch, const std::vector<PositionPair>& neg_pool, Rng& rng) {
  const std::size_t n = std::min(batch.masked.size(), neg_pool.size());
  for (const auto& [a, b] : choose(batch.masked, n, rng)) batch.positives.push_back({a, b, 1});
  for (const auto& [a, b] : choose(neg_pool, n, rng)) batch.negatives.push_back({a, b, 0});
}

const encoder::EncoderParams& no_params() {
  static const encoder::EncoderParams empty;
  return empty;
}

struct TaskSample {
  Task task;
  encoder::Sample sample;
};

std::vector<TaskSample> task_samples(const ModelInput& input, std::size_t index, std::size_t epoch,
                                     std::size_t vocab_size, const PretrainConfig& config) {
  std::vector<TaskSample> out;
  const auto base = tokenize::build_mask(input);
  if (config.mlm && input.code_count > 0) {
    Rng rng = task_rng(config.seed, epoch, index, kMlm);
    auto batch = sample_mlm(input, vocab_size, rng);
    // the corrupted copy keeps every role, so the base mask still applies
    out.push_back({kMlm, {std::move(batch.input), base, encoder::TokenTargets{std::move(batch.targets)}}});
  }
  if (config.edgepred && input.node_count > 0) {
    Rng rng = task_rng(config.seed, epoch, index, kEdge);
    auto batch = sample_edge_mask(input, base, rng);
    if (!batch.positives.empty())
      out.push_back({kEdge, {input, std::move(batch.mask), encoder::PairTargets{batch.candidates()}}});
  }
  if (config.nodealign && input.node_count > 0) {
    Rng rng = task_rng(config.seed, epoch, index, kAlign);
    auto batch = sample_align_mask(input, base, rng);
    if (!batch.positives.empty())
      out.push_back({kAlign, {input, std::move(batch.mask), encoder::PairTargets{batch.candidates()}}});
  }
  return out;
}

double weight(Task task, const PretrainConfig& c) {
  switch (task) {
    case kMlm: return c.mlm_weight;
    case kEdge: return c.edgepred_weight;
    default: return c.nodealign_weight;
  }
}

void record(LossRecord& r, Task task, double loss, const PretrainConfig& c) {
  switch (task) {
    case kMlm: r.mlm = loss; break;
    case kEdge: r.edgepred = loss; break;
    default: r.nodealign = loss; break;
  }
  r.total += weight(task, c) * loss;
}

}  // namespace

Rng task_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t sample, std::uint64_t task) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(epoch), hi(epoch), lo(sample), hi(sample), lo(task)};
  return Rng(seq);
}

MlmBatch sample_mlm(const ModelInput& input, std::size_t vocab_size, Rng& rng, double rate) {
  MlmBatch batch{input, {}, {}};
  if (input.code_count == 0) return batch;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(rate * static_cast<double>(input.code_count))));
  std::vector<Position> code(input.code_count);
  std::iota(code.begin(), code.end(), Position{1});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool can_randomize = vocab_size > static_cast<std::size_t>(tokenize::kReservedCount);
  std::uniform_int_distribution<int> any_id(tokenize::kReservedCount,
                                            static_cast<int>(std::max<std::size_t>(vocab_size, 6) - 1));
  for (Position pos : choose(code, k, rng)) {
    batch.targets.emplace_back(pos, input.token_ids[pos]);
    const double r = unit(rng);
    if (r < 0.8) {
      batch.input.token_ids[pos] = tokenize::kMaskId;
      batch.corruption.push_back(Corruption::Masked);
    } else if (r < 0.9 && can_randomize) {
      batch.input.token_ids[pos] = any_id(rng);
      batch.corruption.push_back(Corruption::Randomized);
    } else {
      batch.corruption.push_back(Corruption::Kept);
    }
  }
  return batch;
}

std::vector<PairCandidate> LinkBatch::candidates() const {
  std::vector<PairCandidate> out = positives;
  out.insert(out.end(), negatives.begin(), negatives.end());
  return out;
}

std::size_t sampled_node_count(std::size_t nodes, double rate) {
  if (nodes == 0) return 0;
  return std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(rate * static_cast<double>(nodes))), 1, nodes);
}

std::set<PositionPair> edge_candidates(const ModelInput& input,
                                       const std::vector<Position>& sampled) {
  std::set<PositionPair> out;
  const auto nodes = node_positions(input);
  for (Position s : sampled) {
    for (Position v : nodes) {
      if (s == v) continue;
      out.emplace(s, v);
      out.emplace(v, s);
    }
  }
  return out;
}

LinkBatch sample_edge_mask(const ModelInput& input, const tokenize::MaskMatrix& base, Rng& rng,
                           double rate) {
  LinkBatch batch;
  batch.mask = base;
  const auto nodes = node_positions(input);
  batch.sampled = choose(nodes, sampled_node_count(nodes.size(), rate), rng);
  const std::set<PositionPair> edges(input.dfg_edges.begin(), input.dfg_edges.end());
  const std::set<Position> chosen(batch.sampled.begin(), batch.sampled.end());
  for (const auto& [from, to] : edges)
    if (from != to && (chosen.contains(from) || chosen.contains(to))) batch.masked.emplace_back(from, to);
  std::vector<PositionPair> neg_pool;
  for (const auto& pair : edge_candidates(input, batch.sampled))
    if (!edges.contains(pair)) neg_pool.push_back(pair);
  balance(batch, neg_pool, rng);
  for (const auto& [from, to] : batch.masked) batch.mask.set(to, from, false);
  return batch;
}

LinkBatch sample_align_mask(const ModelInput& input, const tokenize::MaskMatrix& base, Rng& rng,
                            double rate) {
  LinkBatch batch;
  batch.mask = base;
  const auto nodes = node_positions(input);
  batch.sampled = choose(nodes, sampled_node_count(nodes.size(), rate), rng);
  const std::set<PositionPair> aligned(input.node_alignment.begin(), input.node_alignment.end());
  const std::set<Position> chosen(batch.sampled.begin(), batch.sampled.end());
  for (const auto& pair : aligned)
    if (chosen.contains(pair.first)) batch.masked.push_back(pair);
  std::vector<PositionPair> neg_pool;
  for (Position s : batch.sampled)
    for (Position c = 1; c <= input.code_count; ++c)
      if (!aligned.contains({s, c})) neg_pool.emplace_back(s, c);
  balance(batch, neg_pool, rng);
  for (const auto& [node, code] : batch.masked) {
    batch.mask.set(node, code, false);
    batch.mask.set(code, node, false);
  }
  return batch;
}

double mlm_loss(const encoder::Mat& hidden, const MlmBatch& batch,
                const encoder::EncoderParams& params) {
  return encoder::head_loss(hidden, encoder::TokenTargets{batch.targets}, params);
}

double edgepred_loss(const encoder::Mat& hidden, const LinkBatch& batch) {
  return encoder::head_loss(hidden, encoder::PairTargets{batch.candidates()}, no_params());
}

double nodealign_loss(const encoder::Mat& hidden, const LinkBatch& batch) {
  return encoder::head_loss(hidden, encoder::PairTargets{batch.candidates()}, no_params());
}

LossRecord sample_losses(const ModelInput& input, std::size_t sample, std::size_t epoch,
                         const encoder::EncoderParams& params, const encoder::ModelConfig& model,
                         const PretrainConfig& config) {
  LossRecord r{epoch, sample};
  const auto vocab = static_cast<std::size_t>(params.token_emb.rows());
  for (const auto& ts : task_samples(input, sample, epoch, vocab, config))
    record(r, ts.task, encoder::loss_only(ts.sample, params, model), config);
  return r;
}

std::vector<LossRecord> pretrain_epoch(const std::vector<ModelInput>& corpus,
                                       encoder::EncoderParams& params, encoder::AdamState& adam,
                                       const encoder::ModelConfig& model,
                                       const PretrainConfig& config, std::size_t epoch) {
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng order_rng = task_rng(config.seed, epoch, 0, kOrder);
  std::shuffle(order.begin(), order.end(), order_rng);

  std::vector<LossRecord> trace;
  const auto vocab = static_cast<std::size_t>(params.token_emb.rows());
  for (std::size_t index : order) {
    LossRecord r{epoch, index};
    const auto samples = task_samples(corpus[index], index, epoch, vocab, config);
    if (samples.empty()) {
      trace.push_back(r);
      continue;
    }
    auto total = params.zeros_like();
    auto total_t = total.tensors();
    for (const auto& ts : samples) {
      const auto lg = encoder::loss_and_grads({ts.sample}, params, model);
      record(r, ts.task, lg.loss, config);
      const double w = weight(ts.task, config);
      const auto g = lg.grads.tensors();
      for (std::size_t t = 0; t < g.size(); ++t) *total_t[t].second += w * *g[t].second;
    }
    encoder::adam_step(params, total, adam, config.lr);
    trace.push_back(r);
  }
  return trace;
}

}  // namespace sourcep::pretrain
