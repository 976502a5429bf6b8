#include "sourcep/tokenize.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>

namespace sourcep::tokenize {

namespace {

constexpr std::array<const char*, kReservedCount> kReserved = {"[CLS]", "[SEP]", "[PAD]", "[UNK]",
                                                               "[MASK]"};

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += s[i];
    }
  }
  return out;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) push(r);
}

void Vocabulary::push(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build_from_streams(std::span<const solparse::TokenStream> streams,
                                          std::size_t cap) {
  if (streams.empty()) throw VocabError(VocabError::Kind::EmptyCorpus, "empty training corpus");
  if (cap < kReservedCount + 1)
    throw VocabError(VocabError::Kind::CapTooSmall,
                     "vocabulary cap " + std::to_string(cap) + " leaves no room beyond the " +
                         std::to_string(kReservedCount) + " reserved tokens");
  std::map<std::string, std::size_t> counts;
  for (const auto& stream : streams)
    for (const auto& t : stream)
      if (t.kind != solparse::TokenKind::Comment) ++counts[t.text];

  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [tok, count] : counts) {
    if (std::find(kReserved.begin(), kReserved.end(), tok) != kReserved.end()) continue;
    ranked.emplace_back(tok, count);
  }
  // map iteration is already lexicographic; stable sort keeps that as the tie-break
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary vocab;
  const std::size_t room = cap - kReservedCount;
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) vocab.push(ranked[i].first);
  return vocab;
}

Vocabulary Vocabulary::build(std::span<const ContractRecord> training, std::size_t cap) {
  if (training.empty()) throw VocabError(VocabError::Kind::EmptyCorpus, "empty training corpus");
  std::vector<solparse::TokenStream> streams;
  streams.reserve(training.size());
  for (const auto& rec : training) {
    try {
      streams.push_back(solparse::lex(rec.source));
    } catch (const solparse::LexError&) {
      streams.emplace_back();
    }
  }
  return build_from_streams(streams, cap);
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

std::string Vocabulary::to_lines() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    out += std::to_string(i) + "\t" + escape(tokens_[i]) + "\n";
  return out;
}

Vocabulary Vocabulary::from_lines(std::string_view text) {
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.ids_.clear();
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const auto tab = line.find('\t');
    std::size_t id = 0;
    const auto [ptr, ec] =
        std::from_chars(line.data(), line.data() + std::min(tab, line.size()), id);
    if (tab == std::string_view::npos || ec != std::errc{} || id != line_no)
      throw VocabError(VocabError::Kind::Malformed,
                       "malformed vocabulary line " + std::to_string(line_no + 1));
    vocab.push(unescape(line.substr(tab + 1)));
    ++line_no;
  }
  for (int i = 0; i < kReservedCount; ++i) {
    if (vocab.tokens_.size() <= static_cast<std::size_t>(i) || vocab.tokens_[i] != kReserved[i])
      throw VocabError(VocabError::Kind::Malformed, "vocabulary lacks reserved tokens");
  }
  return vocab;
}

ModelInput encode_input(const solparse::TokenStream& tokens, const dfg::DataFlowGraph& graph,
                        const Vocabulary& vocab, const InputLayout& layout) {
  const std::size_t length = layout.length();
  ModelInput in;
  in.token_ids.assign(length, kPadId);
  in.position_ids.assign(length, kPadPositionId);
  in.roles.assign(length, Role::Pad);

  // Token::index -> code slot (0-based), for tokens that survive truncation
  std::map<std::size_t, std::size_t> code_slot;
  std::size_t total_code = 0;
  in.token_ids[0] = kClsId;
  in.position_ids[0] = 1;
  in.roles[0] = Role::Cls;
  for (const auto& t : tokens) {
    if (t.kind == solparse::TokenKind::Comment) continue;
    if (total_code < layout.code_len) {
      const std::size_t pos = 1 + total_code;
      in.token_ids[pos] = vocab.id(t.text);
      in.position_ids[pos] = static_cast<int>(2 + total_code);
      in.roles[pos] = Role::Code;
      code_slot[t.index] = total_code;
    }
    ++total_code;
  }
  in.code_count = std::min(total_code, layout.code_len);

  const std::size_t sep = in.sep_position();
  in.token_ids[sep] = kSepId;
  in.position_ids[sep] = static_cast<int>(2 + in.code_count);
  in.roles[sep] = Role::Sep;

  in.node_count = std::min(graph.vars.size(), layout.flow_len);
  const std::size_t first_node = in.first_node_position();
  for (std::size_t i = 0; i < in.node_count; ++i) {
    const auto& var = graph.vars[i];
    const auto dot = var.name.rfind('.');
    const std::string_view leaf =
        dot == std::string::npos ? std::string_view(var.name) : std::string_view(var.name).substr(dot + 1);
    in.token_ids[first_node + i] = vocab.id(leaf);
    in.position_ids[first_node + i] = kNodePositionId;
    in.roles[first_node + i] = Role::Node;
  }
  for (const auto& [node, token] : graph.alignment) {
    if (node >= in.node_count) continue;
    auto it = code_slot.find(token);
    if (it == code_slot.end()) continue;
    in.node_alignment.emplace_back(first_node + node, 1 + it->second);
  }
  for (const auto& e : graph.edges) {
    if (e.from >= in.node_count || e.to >= in.node_count) continue;
    in.dfg_edges.emplace_back(first_node + e.from, first_node + e.to);
  }
  in.truncated = total_code > layout.code_len || graph.vars.size() > layout.flow_len;
  return in;
}

MaskMatrix build_mask(const ModelInput& in) {
  const std::size_t n = in.length();
  MaskMatrix mask(n);
  for (std::size_t q = 0; q < n; ++q) {
    const Role rq = in.roles[q];
    if (rq == Role::Pad) continue;
    for (std::size_t k = 0; k < n; ++k) {
      const Role rk = in.roles[k];
      if (rk == Role::Pad) continue;
      if (rq == Role::Cls || rq == Role::Sep || (rq == Role::Code && rk == Role::Code))
        mask.set(q, k, true);
    }
    if (rq == Role::Node) mask.set(q, q, true);
  }
  for (const auto& [from, to] : in.dfg_edges) mask.set(to, from, true);
  for (const auto& [node, code] : in.node_alignment) {
    mask.set(node, code, true);
    mask.set(code, node, true);
  }
  return mask;
}

ModelInput without_dataflow(const ModelInput& input) {
  ModelInput out = input;
  const std::size_t first = out.first_node_position();
  for (std::size_t i = 0; i < out.node_count; ++i) {
    out.token_ids[first + i] = kPadId;
    out.position_ids[first + i] = kPadPositionId;
    out.roles[first + i] = Role::Pad;
  }
  out.node_count = 0;
  out.node_alignment.clear();
  out.dfg_edges.clear();
  return out;
}

}  // namespace sourcep::tokenize
