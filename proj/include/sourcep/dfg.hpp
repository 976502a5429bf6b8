#pragma once

#include "sourcep/solparse.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace sourcep::dfg {

/// One variable occurrence in the source.
struct VarNode {
  std::string name;                  // dotted for member chains
  std::size_t occurrence = 0;        // 1-based ordinal among same-named nodes
  std::size_t node_index = 0;        // position in DataFlowGraph::vars
  std::size_t code_token_index = 0;  // Token::index of the root identifier

  bool operator==(const VarNode&) const = default;
};

/// Directed "value comes from" edge: the value of `to` comes from `from`.
struct DfEdge {
  std::size_t from = 0;
  std::size_t to = 0;

  auto operator<=>(const DfEdge&) const = default;
};

struct DataFlowGraph {
  std::vector<VarNode> vars;  // ordered by code_token_index
  std::vector<DfEdge> edges;  // sorted, unique
  std::vector<std::pair<std::size_t, std::size_t>> alignment;  // (node_index, Token::index)

  bool operator==(const DataFlowGraph&) const = default;
};

/// Builds the graph by reaching-definition propagation over the AST.
///
/// Rules: a declaration or assignment target receives edges from every
/// variable occurrence on its right-hand side; a compound assignment or
/// ++/-- additionally receives an edge from the previous definition; every
/// other occurrence receives edges from its current reaching definitions.
/// if/else merges both branch exits. Loop bodies are walked twice so that
/// definitions at the end of one iteration reach uses in the next. Reaching
/// definitions are per function; state variables start from their
/// declarations and carry the union of each function's exit definitions
/// into the next function in declaration order. msg/block/tx chains never
/// receive edges.
DataFlowGraph extract_dfg(const solparse::Ast& ast, const solparse::TokenStream& tokens);

/// Convenience: lex, parse and extract.
DataFlowGraph extract_dfg(std::string_view source, solparse::TokenStream* tokens_out = nullptr);

/// Graphviz rendering; nodes are labelled "name_occurrence".
std::string to_dot(const DataFlowGraph& graph);

std::string node_label(const VarNode& node);

}  // namespace sourcep::dfg
