#include "sourcep/dfg.hpp"

#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace sourcep::dfg {

using solparse::Ast;
using solparse::AstKind;
using solparse::TokenStream;

namespace {

using NodeSet = std::set<std::size_t>;
using Defs = std::map<std::string, NodeSet>;

std::string root_of(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

void merge_into(Defs& into, const Defs& from) {
  for (const auto& [name, nodes] : from) into[name].insert(nodes.begin(), nodes.end());
}

class Builder {
public:
  Builder(const Ast& root, const TokenStream& tokens) : root_(root), tokens_(tokens), scanner_(root, tokens) {}

  DataFlowGraph build() {
    std::map<std::string, std::size_t> seen;
    for (const auto& leaf : scanner_.scan(root_)) {
      VarNode node;
      node.name = leaf.name;
      node.occurrence = ++seen[leaf.name];
      node.node_index = graph_.vars.size();
      node.code_token_index = leaf.token;
      node_of_token_[leaf.token] = node.node_index;
      graph_.alignment.emplace_back(node.node_index, leaf.token);
      graph_.vars.push_back(std::move(node));
    }

    Defs top_level;
    for (const auto& item : root_.children) {
      switch (item.kind) {
        case AstKind::ContractDecl: contract(item); break;
        case AstKind::FunctionDecl:
        case AstKind::ModifierDecl: {
          Defs no_state;
          function(item, no_state, {});
          break;
        }
        case AstKind::PragmaDirective:
        case AstKind::ImportDirective:
        case AstKind::StructDecl:
        case AstKind::EnumDecl:
        case AstKind::EventDecl:
        case AstKind::ErrorDecl:
        case AstKind::UsingDirective:
          break;
        default: {
          defs_ = std::move(top_level);
          statement(item);
          top_level = std::move(defs_);
          break;
        }
      }
    }
    graph_.edges.assign(edges_.begin(), edges_.end());
    return std::move(graph_);
  }

private:
  const Ast& root_;
  const TokenStream& tokens_;
  solparse::VariableScanner scanner_;
  DataFlowGraph graph_;
  std::unordered_map<std::size_t, std::size_t> node_of_token_;
  std::set<DfEdge> edges_;
  Defs defs_;
  std::unordered_set<std::string> locals_;

  const std::string& text(const Ast& terminal) const { return tokens_[*terminal.token].text; }
  const std::string& name(std::size_t node) const { return graph_.vars[node].name; }
  bool is_global(std::size_t node) const {
    return solparse::is_global_root(root_of(name(node)));
  }

  void add_edge(std::size_t from, std::size_t to) {
    if (is_global(to)) return;
    edges_.insert(DfEdge{from, to});
  }

  NodeSet reaching(const std::string& var) const {
    if (auto it = defs_.find(var); it != defs_.end() && !it->second.empty()) return it->second;
    const std::string root = root_of(var);
    if (root != var) {
      if (auto it = defs_.find(root); it != defs_.end()) return it->second;
    }
    return {};
  }

  void use(std::size_t node) {
    if (is_global(node)) return;
    for (auto d : reaching(name(node))) add_edge(d, node);
  }

  void define(std::size_t node, const std::vector<std::size_t>& sources, bool self_update) {
    if (is_global(node)) return;
    if (self_update)
      for (auto d : reaching(name(node))) add_edge(d, node);
    for (auto s : sources) add_edge(s, node);
    defs_[name(node)] = NodeSet{node};
  }

  std::optional<std::size_t> node_for(const Ast& n) const {
    if (auto leaf = scanner_.chain(n)) {
      if (auto it = node_of_token_.find(leaf->token); it != node_of_token_.end())
        return it->second;
    }
    return std::nullopt;
  }

  // ---- declarations ---------------------------------------------------------

  void contract(const Ast& c) {
    Defs state;
    std::unordered_set<std::string> state_names;
    for (const auto& member : c.children) {
      switch (member.kind) {
        case AstKind::StateVariableDecl: {
          defs_ = state;
          const auto targets = declaration(member);
          for (auto t : targets) state_names.insert(name(t));
          state = std::move(defs_);
          break;
        }
        case AstKind::FunctionDecl:
        case AstKind::ModifierDecl: function(member, state, state_names); break;
        case AstKind::OpaqueStatement:
        case AstKind::InheritanceSpecifier:
          defs_ = state;
          flow(member);
          break;
        default: break;
      }
    }
  }

  void function(const Ast& f, Defs& state, const std::unordered_set<std::string>& state_names) {
    defs_ = state;
    locals_.clear();
    for (const auto& child : f.children) {
      switch (child.kind) {
        case AstKind::ParameterList:
          for (const auto& p : child.children) {
            if (p.kind != AstKind::Parameter) continue;
            for (const auto& pc : p.children) {
              if (pc.kind != AstKind::VariableName) continue;
              if (auto it = node_of_token_.find(*pc.children[0].token); it != node_of_token_.end()) {
                define(it->second, {}, false);
                locals_.insert(name(it->second));
              }
            }
          }
          break;
        case AstKind::ModifierInvocation: flow(child); break;
        case AstKind::Block: statement(child); break;
        default: break;
      }
    }
    for (const auto& s : state_names) {
      if (locals_.contains(s)) continue;
      if (auto it = defs_.find(s); it != defs_.end()) state[s].insert(it->second.begin(), it->second.end());
    }
  }

  // Handles VariableDeclStatement and StateVariableDecl; returns declared nodes.
  std::vector<std::size_t> declaration(const Ast& decl) {
    std::vector<std::size_t> targets;
    const Ast* init = nullptr;
    bool after_eq = false;
    for (const auto& c : decl.children) {
      if (c.is_terminal()) {
        after_eq = after_eq || text(c) == "=";
        continue;
      }
      if (after_eq) {
        init = &c;
      } else if (c.kind == AstKind::VariableName) {
        if (auto it = node_of_token_.find(*c.children[0].token); it != node_of_token_.end())
          targets.push_back(it->second);
      } else if (c.kind == AstKind::Parameter) {
        for (const auto& pc : c.children) {
          if (pc.kind == AstKind::VariableName) {
            if (auto it = node_of_token_.find(*pc.children[0].token); it != node_of_token_.end())
              targets.push_back(it->second);
          } else {
            flow(pc);
          }
        }
      } else {
        flow(c);  // array size expressions inside type names
      }
    }
    const auto sources = init ? flow(*init) : std::vector<std::size_t>{};
    for (auto t : targets) {
      define(t, sources, false);
      locals_.insert(name(t));
    }
    return targets;
  }

  // ---- statements -------------------------------------------------------------

  template <class Body>
  void loop(Body&& body) {
    const Defs before = defs_;
    body();
    merge_into(defs_, before);
    body();
    merge_into(defs_, before);
  }

  void statement(const Ast& s) {
    switch (s.kind) {
      case AstKind::Block:
        for (const auto& c : s.children)
          if (!c.is_terminal()) statement(c);
        return;
      case AstKind::VariableDeclStatement: declaration(s); return;
      case AstKind::IfStatement: {
        flow(s.children[2]);
        const Defs before = defs_;
        statement(s.children[4]);
        Defs then_exit = std::move(defs_);
        defs_ = before;
        if (s.children.size() > 6) statement(s.children[6]);
        merge_into(defs_, then_exit);
        return;
      }
      case AstKind::ForStatement: {
        const Ast* init = nullptr;
        const Ast* cond = nullptr;
        const Ast* update = nullptr;
        std::size_t i = 2;
        if (!s.children[i].is_terminal()) init = &s.children[i];
        ++i;
        if (!s.children[i].is_terminal()) cond = &s.children[i++];
        ++i;  // ';'
        if (!s.children[i].is_terminal()) update = &s.children[i];
        const Ast& body = s.children.back();
        if (init) statement(*init);
        loop([&] {
          if (cond) flow(*cond);
          statement(body);
          if (update) flow(*update);
        });
        return;
      }
      case AstKind::WhileStatement:
        loop([&] {
          flow(s.children[2]);
          statement(s.children[4]);
        });
        return;
      case AstKind::DoWhileStatement:
        loop([&] {
          statement(s.children[1]);
          flow(s.children[4]);
        });
        return;
      case AstKind::BreakStatement:
      case AstKind::ContinueStatement:
      case AstKind::ThrowStatement:
        return;
      default: flow(s); return;
    }
  }

  // ---- expressions ------------------------------------------------------------

  // Applies the use/definition rules inside `e` and returns the variable
  // occurrences whose values flow out of it.
  std::vector<std::size_t> flow(const Ast& e) {
    if (e.is_terminal()) return {};
    if (e.kind == AstKind::Identifier || e.kind == AstKind::MemberAccess) {
      if (auto n = node_for(e)) {
        use(*n);
        return {*n};
      }
    }
    switch (e.kind) {
      case AstKind::Assignment: {
        const bool compound = text(e.children[1]) != "=";
        const auto sources = flow(e.children[2]);
        const auto targets = lvalue(e.children[0]);
        for (auto t : targets) define(t, sources, compound);
        return targets;
      }
      case AstKind::UnaryExpr: {
        const bool prefix = e.children[0].is_terminal();
        const Ast& op = prefix ? e.children[0] : e.children[1];
        const Ast& operand = prefix ? e.children[1] : e.children[0];
        if (text(op) == "++" || text(op) == "--") {
          const auto targets = lvalue(operand);
          for (auto t : targets) define(t, {}, true);
          return targets;
        }
        return flow(operand);
      }
      case AstKind::CallExpr: {
        auto out = callee(e.children[0]);
        for (std::size_t i = 1; i < e.children.size(); ++i) append(out, flow(e.children[i]));
        return out;
      }
      case AstKind::TypeName:
      case AstKind::MappingType:
      case AstKind::ElementaryTypeExpr:
      case AstKind::NewExpr:
        return {};
      default: {
        std::vector<std::size_t> out;
        for (const auto& c : e.children) append(out, flow(c));
        return out;
      }
    }
  }

  std::vector<std::size_t> callee(const Ast& c) {
    switch (c.kind) {
      case AstKind::Terminal:
      case AstKind::Identifier:
      case AstKind::ElementaryTypeExpr:
      case AstKind::NewExpr:
        return {};
      case AstKind::MemberAccess: return flow(c.children[0]);
      case AstKind::CallOptions: {
        auto out = callee(c.children[0]);
        for (std::size_t i = 1; i < c.children.size(); ++i) append(out, flow(c.children[i]));
        return out;
      }
      default: return flow(c);
    }
  }

  std::vector<std::size_t> lvalue(const Ast& e) {
    if (auto n = node_for(e)) return {*n};
    switch (e.kind) {
      case AstKind::IndexAccess: {
        auto targets = lvalue(e.children[0]);
        for (std::size_t i = 1; i < e.children.size(); ++i) flow(e.children[i]);
        return targets;
      }
      case AstKind::MemberAccess: return lvalue(e.children[0]);
      case AstKind::TupleExpr: {
        std::vector<std::size_t> out;
        for (const auto& c : e.children)
          if (!c.is_terminal()) append(out, lvalue(c));
        return out;
      }
      default: flow(e); return {};
    }
  }

  static void append(std::vector<std::size_t>& into, const std::vector<std::size_t>& from) {
    into.insert(into.end(), from.begin(), from.end());
  }
};

}  // namespace

DataFlowGraph extract_dfg(const Ast& ast, const TokenStream& tokens) {
  return Builder(ast, tokens).build();
}

DataFlowGraph extract_dfg(std::string_view source, TokenStream* tokens_out) {
  TokenStream tokens;
  Ast ast = solparse::parse_source(source, &tokens);
  DataFlowGraph g = extract_dfg(ast, tokens);
  if (tokens_out) *tokens_out = std::move(tokens);
  return g;
}

std::string node_label(const VarNode& node) {
  return node.name + "_" + std::to_string(node.occurrence);
}

std::string to_dot(const DataFlowGraph& graph) {
  std::string out = "digraph dfg {\n";
  for (const auto& v : graph.vars) out += "  \"" + node_label(v) + "\";\n";
  for (const auto& e : graph.edges)
    out += "  \"" + node_label(graph.vars[e.from]) + "\" -> \"" + node_label(graph.vars[e.to]) +
           "\";\n";
  out += "}\n";
  return out;
}

}  // namespace sourcep::dfg
