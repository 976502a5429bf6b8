#pragma once

#include "sourcep/dfg.hpp"
#include "sourcep/error.hpp"
#include "sourcep/record.hpp"
#include "sourcep/solparse.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sourcep::tokenize {

inline constexpr int kClsId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kReservedCount = 5;

class VocabError : public Error {
public:
  enum class Kind { EmptyCorpus, CapTooSmall, Malformed };
  VocabError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

private:
  Kind kind_;
};

/// Token <-> id map. Ids 0..4 are [CLS] [SEP] [PAD] [UNK] [MASK]; the rest
/// are assigned by descending training-set frequency, ties broken by byte
/// order of the token text.
class Vocabulary {
public:
  Vocabulary();

  /// `cap` bounds the total size, reserved ids included.
  static Vocabulary build(std::span<const ContractRecord> training, std::size_t cap);

  /// Same, from already-lexed streams (comments are skipped).
  static Vocabulary build_from_streams(std::span<const solparse::TokenStream> streams,
                                       std::size_t cap);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(std::string_view token) const;

  /// One "id<TAB>escaped-token" line per entry, in id order.
  std::string to_lines() const;
  static Vocabulary from_lines(std::string_view text);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class Role : std::uint8_t { Cls, Code, Sep, Node, Pad };

struct InputLayout {
  std::size_t code_len = 256;
  std::size_t flow_len = 64;

  std::size_t length() const noexcept { return 1 + code_len + 1 + flow_len; }
  /// Rows needed in the position table: node id 0, [CLS] 1, code from 2, [SEP].
  std::size_t position_count() const noexcept { return code_len + 3; }
};

inline constexpr int kNodePositionId = 0;
inline constexpr int kPadPositionId = 1;

/// The sequence [CLS] code... [SEP] nodes... [PAD]... plus its graph.
struct ModelInput {
  std::vector<int> token_ids;
  std::vector<int> position_ids;
  std::vector<Role> roles;
  /// (node position, code position) pairs, sequence positions.
  std::vector<std::pair<std::size_t, std::size_t>> node_alignment;
  /// (from position, to position): the value at `to` comes from `from`.
  std::vector<std::pair<std::size_t, std::size_t>> dfg_edges;
  std::size_t code_count = 0;
  std::size_t node_count = 0;
  bool truncated = false;

  std::size_t length() const noexcept { return token_ids.size(); }
  /// Non-pad prefix length.
  std::size_t active_length() const noexcept { return 2 + code_count + node_count; }
  std::size_t sep_position() const noexcept { return 1 + code_count; }
  std::size_t first_node_position() const noexcept { return 2 + code_count; }

  bool operator==(const ModelInput&) const = default;
};

/// Square allow/forbid matrix over sequence positions.
class MaskMatrix {
public:
  MaskMatrix() = default;
  explicit MaskMatrix(std::size_t n) : n_(n), allow_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }
  bool allowed(std::size_t query, std::size_t key) const { return allow_[query * n_ + key] != 0; }
  void set(std::size_t query, std::size_t key, bool allow) { allow_[query * n_ + key] = allow ? 1 : 0; }

  bool operator==(const MaskMatrix&) const = default;

private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> allow_;
};

/// Code tokens keep their first `code_len`; nodes keep their first
/// `flow_len` in source order, and edges / alignment pairs are restricted to
/// what survives. Node slots carry the id of the variable's last name
/// segment (e.g. "sender" for msg.sender).
ModelInput encode_input(const solparse::TokenStream& tokens, const dfg::DataFlowGraph& graph,
                        const Vocabulary& vocab, const InputLayout& layout = {});

/// Graph-guided attention permissions:
///   [CLS]/[SEP] queries see every non-pad key; code sees code; a node sees
///   itself and every node it has an incoming data-flow edge from; a node and
///   the code token it was read from see each other. Pad is never visible.
MaskMatrix build_mask(const ModelInput& input);

/// Layout with no data flow: every node slot and edge removed.
ModelInput without_dataflow(const ModelInput& input);

}  // namespace sourcep::tokenize
