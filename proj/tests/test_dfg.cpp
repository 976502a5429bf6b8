#include "sourcep/dfg.hpp"
#include "support/corpus.hpp"
#include "support/dfg_cases.hpp"
#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace sourcep::dfg;
using sourcep::testing::CorpusGenerator;
using sourcep::testing::read_fixture;

namespace {

std::vector<std::string> labels(const DataFlowGraph& g) {
  std::vector<std::string> out;
  for (const auto& v : g.vars) out.push_back(node_label(v));
  return out;
}

std::vector<std::string> names(const DataFlowGraph& g) {
  std::vector<std::string> out;
  for (const auto& v : g.vars) out.push_back(v.name);
  return out;
}

std::set<std::pair<std::size_t, std::size_t>> edge_set(const DataFlowGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& e : g.edges) out.emplace(e.from, e.to);
  return out;
}

using Edges = std::set<std::pair<std::size_t, std::size_t>>;

void check_invariants(const DataFlowGraph& g, const sourcep::solparse::TokenStream& ts) {
  for (std::size_t i = 0; i < g.vars.size(); ++i) {
    EXPECT_EQ(g.vars[i].node_index, i);
    if (i > 0) EXPECT_LT(g.vars[i - 1].code_token_index, g.vars[i].code_token_index);
    EXPECT_EQ(ts.at(g.vars[i].code_token_index).kind, sourcep::solparse::TokenKind::Identifier);
  }
  for (std::size_t k = 1; k < g.edges.size(); ++k) EXPECT_LT(g.edges[k - 1], g.edges[k]);
  for (const auto& e : g.edges) {
    ASSERT_LT(e.from, g.vars.size());
    ASSERT_LT(e.to, g.vars.size());
    const auto root = g.vars[e.to].name.substr(0, g.vars[e.to].name.find('.'));
    EXPECT_FALSE(sourcep::solparse::is_global_root(root));
  }
  ASSERT_EQ(g.alignment.size(), g.vars.size());
  for (std::size_t i = 0; i < g.vars.size(); ++i) {
    EXPECT_EQ(g.alignment[i].first, i);
    EXPECT_EQ(g.alignment[i].second, g.vars[i].code_token_index);
  }
}

}  // namespace

TEST(Dfg, HandTracedCases) {
  for (const auto& c : sourcep::testing::dfg_cases()) {
    SCOPED_TRACE(c.name);
    sourcep::solparse::TokenStream ts;
    const auto g = extract_dfg(c.source, &ts);
    EXPECT_EQ(names(g), c.vars);
    EXPECT_EQ(edge_set(g), c.edges);
    check_invariants(g, ts);
  }
}

TEST(Dfg, EmptyContractDot) { EXPECT_EQ(to_dot(extract_dfg("contract C {}")), "digraph dfg {\n}\n"); }

TEST(Dfg, FragmentGraph) {
  sourcep::solparse::TokenStream ts;
  const auto g = extract_dfg(read_fixture("join_fragment.sol"), &ts);
  EXPECT_EQ(labels(g),
            (std::vector<std::string>{"amount_1", "msg.value_1", "investors_1", "msg.sender_1",
                                      "amount_2", "balance_1", "amount_3", "owner_1",
                                      "amount_4"}));
  EXPECT_EQ(edge_set(g), (Edges{{1, 0}, {0, 4}, {0, 6}, {6, 5}, {0, 8}}));
  check_invariants(g, ts);
}

TEST(Dfg, DotRendering) {
  const auto g = extract_dfg("uint a = b;");
  EXPECT_EQ(to_dot(g), "digraph dfg {\n  \"a_1\";\n  \"b_1\";\n  \"b_1\" -> \"a_1\";\n}\n");
}

TEST(DfgProperty, InvariantsOnGeneratedContracts) {
  CorpusGenerator gen(19);
  for (int i = 0; i < 200; ++i) {
    const auto src = i % 2 ? gen.ponzi() : gen.benign();
    sourcep::solparse::TokenStream ts;
    const auto g = extract_dfg(src, &ts);
    ASSERT_FALSE(g.vars.empty()) << src;
    check_invariants(g, ts);
    // occurrence numbering counts same-named nodes in order
    std::map<std::string, std::size_t> seen;
    for (const auto& v : g.vars) EXPECT_EQ(v.occurrence, ++seen[v.name]);
    // deterministic
    EXPECT_EQ(extract_dfg(src), g);
  }
}
