#pragma once

// A one-layer, width-8, two-head model over a 12-slot input, with one sample
// per training objective.

#include "sourcep/dfg.hpp"
#include "sourcep/encoder.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sourcep::testing {

struct TinySetup {
  encoder::ModelConfig config;
  tokenize::Vocabulary vocab;
  tokenize::ModelInput input;
  encoder::EncoderParams params;
};

inline TinySetup tiny_setup(std::uint64_t seed = 3) {
  TinySetup s;
  s.config.layers = 1;
  s.config.hidden = 8;
  s.config.heads = 2;
  s.config.ffn = 16;
  s.config.code_len = 6;
  s.config.flow_len = 4;
  s.config.seed = seed;
  const std::string src = "uint a = b; c = a;";
  s.vocab = tokenize::Vocabulary::build(std::vector<ContractRecord>{{0, src, 0}}, 100);
  solparse::TokenStream ts;
  const auto g = dfg::extract_dfg(src, &ts);
  s.input = tokenize::encode_input(ts, g, s.vocab, s.config.layout());
  s.params = encoder::init_params(s.config, s.vocab.size());
  // widen the weights so every tensor gets a sizeable gradient
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> normal(0.0, 0.4);
  for (auto& [name, m] : s.params.tensors())
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += normal(rng);
  return s;
}

inline std::vector<std::pair<std::string, encoder::Sample>> tiny_objectives(const TinySetup& s) {
  using encoder::PairCandidate;
  std::vector<std::pair<std::string, encoder::Sample>> out;
  const auto& in = s.input;
  const auto mask = tokenize::build_mask(in);
  const std::size_t f = in.first_node_position();

  out.push_back({"classification", {in, mask, encoder::ClassTarget{1}}});

  auto corrupted = in;
  corrupted.token_ids[2] = tokenize::kMaskId;
  corrupted.token_ids[4] = s.vocab.id("c");
  out.push_back({"mlm",
                 {corrupted, tokenize::build_mask(corrupted),
                  encoder::TokenTargets{{{2, in.token_ids[2]}, {4, in.token_ids[4]}, {5, in.token_ids[5]}}}}});

  // nodes a(f) b(f+1) c(f+2) a(f+3), edges b->a, a->a', a'->c; hide the two touching a
  auto edge_mask = mask;
  edge_mask.set(f, f + 1, false);
  edge_mask.set(f + 3, f, false);
  out.push_back({"edge_prediction",
                 {in, edge_mask,
                  encoder::PairTargets{{PairCandidate{f + 1, f, 1}, PairCandidate{f, f + 3, 1},
                                        PairCandidate{f, f + 2, 0}, PairCandidate{f + 2, f, 0}}}}});

  auto align_mask = mask;
  align_mask.set(f, 2, false);
  align_mask.set(2, f, false);
  out.push_back({"node_alignment",
                 {in, align_mask,
                  encoder::PairTargets{{PairCandidate{f, 2, 1}, PairCandidate{f, 4, 0}}}}});
  return out;
}

}  // namespace sourcep::testing
