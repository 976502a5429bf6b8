#include "sourcep/solparse.hpp"

#include <algorithm>

namespace sourcep::solparse {

bool is_global_root(std::string_view name) {
  return name == "msg" || name == "block" || name == "tx";
}

namespace {

const std::string& leaf_text(const Ast& terminal, const TokenStream& tokens) {
  return tokens[*terminal.token].text;
}

// Name terminal of a declaration node: the first identifier-token terminal
// after the introducing keyword(s).
std::optional<std::string> declared_name(const Ast& node, const TokenStream& tokens) {
  for (const auto& c : node.children) {
    if (c.is_terminal() && tokens[*c.token].kind == TokenKind::Identifier)
      return tokens[*c.token].text;
  }
  return std::nullopt;
}

void collect_type_names(const Ast& node, const TokenStream& tokens,
                        std::vector<std::string>& out) {
  switch (node.kind) {
    case AstKind::ContractDecl:
    case AstKind::StructDecl:
    case AstKind::EnumDecl:
      if (auto name = declared_name(node, tokens)) out.push_back(*name);
      break;
    default: break;
  }
  for (const auto& c : node.children) collect_type_names(c, tokens, out);
}

}  // namespace

VariableScanner::VariableScanner(const Ast& root, const TokenStream& tokens) : tokens_(&tokens) {
  collect_type_names(root, tokens, type_names_);
  std::sort(type_names_.begin(), type_names_.end());
  type_names_.erase(std::unique(type_names_.begin(), type_names_.end()), type_names_.end());
}

std::optional<LeafIdentifier> VariableScanner::chain(const Ast& node) const {
  if (node.kind == AstKind::Identifier) {
    const std::string& name = leaf_text(node.children[0], *tokens_);
    if (name == "_" || std::binary_search(type_names_.begin(), type_names_.end(), name))
      return std::nullopt;
    return LeafIdentifier{*node.children[0].token, name, AstPath{0}};
  }
  if (node.kind == AstKind::MemberAccess) {
    auto base = chain(node.children[0]);
    if (!base) return std::nullopt;
    base->name += "." + leaf_text(node.children[2], *tokens_);
    base->path.insert(base->path.begin(), 0);
    return base;
  }
  return std::nullopt;
}

namespace {
bool is_chain_shape(const Ast& node) {
  if (node.kind == AstKind::Identifier) return true;
  return node.kind == AstKind::MemberAccess && is_chain_shape(node.children[0]);
}
}  // namespace

void VariableScanner::visit(const Ast& node, AstPath& path,
                            std::vector<LeafIdentifier>& out) const {
  auto emit_chain = [&](const Ast& n) {
    if (auto var = chain(n)) {
      var->path.insert(var->path.begin(), path.begin(), path.end());
      out.push_back(std::move(*var));
    }
  };
  auto visit_children = [&](std::size_t from) {
    for (std::size_t i = from; i < node.children.size(); ++i) {
      path.push_back(i);
      visit(node.children[i], path, out);
      path.pop_back();
    }
  };

  switch (node.kind) {
    case AstKind::Terminal: return;
    case AstKind::Identifier: emit_chain(node); return;
    case AstKind::VariableName: {
      const auto& leaf = node.children[0];
      AstPath p = path;
      p.push_back(0);
      out.push_back(LeafIdentifier{*leaf.token, leaf_text(leaf, *tokens_), std::move(p)});
      return;
    }
    case AstKind::MemberAccess:
      if (is_chain_shape(node)) {
        emit_chain(node);
      } else {
        path.push_back(0);
        visit(node.children[0], path, out);
        path.pop_back();
      }
      return;
    case AstKind::CallExpr: {
      const Ast& callee = node.children[0];
      path.push_back(0);
      visit_callee(callee, path, out);
      path.pop_back();
      visit_children(1);
      return;
    }
    case AstKind::ArrayType:
      // element type carries no variables; a size expression may
      visit_children(0);
      return;
    case AstKind::TypeName:
    case AstKind::MappingType:
    case AstKind::ElementaryTypeExpr:
    case AstKind::NewExpr:
    case AstKind::StructDecl:
    case AstKind::EnumDecl:
    case AstKind::EventDecl:
    case AstKind::ErrorDecl:
    case AstKind::PragmaDirective:
    case AstKind::ImportDirective:
    case AstKind::UsingDirective:
      return;
    default: visit_children(0); return;
  }
}

void VariableScanner::visit_callee(const Ast& callee, AstPath& path,
                                   std::vector<LeafIdentifier>& out) const {
  switch (callee.kind) {
    case AstKind::Terminal:
    case AstKind::Identifier:
    case AstKind::ElementaryTypeExpr:
    case AstKind::NewExpr:
      return;
    case AstKind::MemberAccess: {
      const Ast& base = callee.children[0];
      path.push_back(0);
      visit(base, path, out);
      path.pop_back();
      return;
    }
    case AstKind::CallOptions: {
      path.push_back(0);
      visit_callee(callee.children[0], path, out);
      path.pop_back();
      for (std::size_t i = 1; i < callee.children.size(); ++i) {
        path.push_back(i);
        visit(callee.children[i], path, out);
        path.pop_back();
      }
      return;
    }
    default: visit(callee, path, out); return;
  }
}

std::vector<LeafIdentifier> VariableScanner::scan(const Ast& node, AstPath path) const {
  std::vector<LeafIdentifier> out;
  visit(node, path, out);
  std::stable_sort(out.begin(), out.end(),
                   [](const LeafIdentifier& a, const LeafIdentifier& b) { return a.token < b.token; });
  return out;
}

std::vector<LeafIdentifier> leaf_identifiers(const Ast& ast, const TokenStream& tokens) {
  return VariableScanner(ast, tokens).scan(ast);
}

}  // namespace sourcep::solparse
