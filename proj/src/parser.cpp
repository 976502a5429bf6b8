#include "sourcep/solparse.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace sourcep::solparse {

std::string_view to_string(AstKind kind) {
  switch (kind) {
    case AstKind::SourceUnit: return "SourceUnit";
    case AstKind::PragmaDirective: return "PragmaDirective";
    case AstKind::ImportDirective: return "ImportDirective";
    case AstKind::ContractDecl: return "ContractDecl";
    case AstKind::InheritanceSpecifier: return "InheritanceSpecifier";
    case AstKind::UsingDirective: return "UsingDirective";
    case AstKind::StateVariableDecl: return "StateVariableDecl";
    case AstKind::StructDecl: return "StructDecl";
    case AstKind::EnumDecl: return "EnumDecl";
    case AstKind::EventDecl: return "EventDecl";
    case AstKind::ErrorDecl: return "ErrorDecl";
    case AstKind::ModifierDecl: return "ModifierDecl";
    case AstKind::FunctionDecl: return "FunctionDecl";
    case AstKind::ParameterList: return "ParameterList";
    case AstKind::Parameter: return "Parameter";
    case AstKind::ModifierInvocation: return "ModifierInvocation";
    case AstKind::TypeName: return "TypeName";
    case AstKind::MappingType: return "MappingType";
    case AstKind::ArrayType: return "ArrayType";
    case AstKind::VariableName: return "VariableName";
    case AstKind::Block: return "Block";
    case AstKind::VariableDeclStatement: return "VariableDeclStatement";
    case AstKind::ExpressionStatement: return "ExpressionStatement";
    case AstKind::IfStatement: return "IfStatement";
    case AstKind::ForStatement: return "ForStatement";
    case AstKind::WhileStatement: return "WhileStatement";
    case AstKind::DoWhileStatement: return "DoWhileStatement";
    case AstKind::ReturnStatement: return "ReturnStatement";
    case AstKind::EmitStatement: return "EmitStatement";
    case AstKind::BreakStatement: return "BreakStatement";
    case AstKind::ContinueStatement: return "ContinueStatement";
    case AstKind::ThrowStatement: return "ThrowStatement";
    case AstKind::OpaqueStatement: return "OpaqueStatement";
    case AstKind::Assignment: return "Assignment";
    case AstKind::BinaryExpr: return "BinaryExpr";
    case AstKind::UnaryExpr: return "UnaryExpr";
    case AstKind::ConditionalExpr: return "ConditionalExpr";
    case AstKind::CallExpr: return "CallExpr";
    case AstKind::CallOptions: return "CallOptions";
    case AstKind::NamedArguments: return "NamedArguments";
    case AstKind::MemberAccess: return "MemberAccess";
    case AstKind::IndexAccess: return "IndexAccess";
    case AstKind::Identifier: return "Identifier";
    case AstKind::Literal: return "Literal";
    case AstKind::TupleExpr: return "TupleExpr";
    case AstKind::NewExpr: return "NewExpr";
    case AstKind::ElementaryTypeExpr: return "ElementaryTypeExpr";
    case AstKind::Terminal: return "Terminal";
  }
  return "?";
}

namespace {

std::string parse_message(ParseError::Kind kind, const std::vector<std::string>& expected,
                          std::size_t offset, const std::string& found) {
  std::string msg;
  switch (kind) {
    case ParseError::Kind::UnbalancedBrackets: msg = "unbalanced brackets"; break;
    case ParseError::Kind::TooDeep: msg = "nesting too deep"; break;
    case ParseError::Kind::UnexpectedToken: msg = "unexpected " + found; break;
  }
  msg += " at byte " + std::to_string(offset);
  if (!expected.empty()) {
    msg += "; expected one of:";
    for (const auto& e : expected) msg += " '" + e + "'";
  }
  return msg;
}

}  // namespace

ParseError::ParseError(Kind kind, std::vector<std::string> expected, std::size_t offset,
                       std::string found)
    : Error(parse_message(kind, expected, offset, found)),
      kind_(kind),
      expected_(std::move(expected)),
      offset_(offset) {}

namespace {

constexpr int kMaxDepth = 256;

const std::unordered_set<std::string_view>& elementary_type_words() {
  static const std::unordered_set<std::string_view> s = {
      "address", "bool", "string", "bytes", "byte", "int", "uint", "fixed", "ufixed", "var"};
  return s;
}

bool is_elementary(const Token& t) {
  if (t.kind != TokenKind::Keyword) return false;
  if (elementary_type_words().contains(t.text)) return true;
  const std::string_view w = t.text;
  return (w.starts_with("uint") || w.starts_with("int") || w.starts_with("bytes")) &&
         w.size() > 3;
}

const std::unordered_set<std::string_view>& literal_units() {
  static const std::unordered_set<std::string_view> s = {
      "wei", "gwei", "szabo", "finney", "ether", "seconds", "minutes", "hours", "days", "weeks",
      "years"};
  return s;
}

const std::unordered_set<std::string_view>& assignment_ops() {
  static const std::unordered_set<std::string_view> s = {
      "=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>=", ">>>="};
  return s;
}

int binary_precedence(std::string_view op) {
  static const std::unordered_map<std::string_view, int> table = {
      {"||", 1}, {"&&", 2}, {"==", 3}, {"!=", 3}, {"<", 4},  {">", 4},   {"<=", 4},
      {">=", 4}, {"|", 5},  {"^", 6},  {"&", 7},  {"<<", 8}, {">>", 8},  {">>>", 8},
      {"+", 9},  {"-", 9},  {"*", 10}, {"/", 10}, {"%", 10}, {"**", 11},
  };
  auto it = table.find(op);
  return it == table.end() ? -1 : it->second;
}

const std::unordered_set<std::string_view>& function_attributes() {
  static const std::unordered_set<std::string_view> s = {
      "public", "private", "internal", "external", "pure", "view", "constant", "payable",
      "virtual"};
  return s;
}

const std::unordered_set<std::string_view>& state_var_attributes() {
  static const std::unordered_set<std::string_view> s = {
      "public", "private", "internal", "constant", "immutable"};
  return s;
}

const std::unordered_set<std::string_view>& data_locations() {
  static const std::unordered_set<std::string_view> s = {"memory", "storage", "calldata"};
  return s;
}

class Parser {
public:
  explicit Parser(const TokenStream& all) : all_(all) {
    for (const auto& t : all_)
      if (t.kind != TokenKind::Comment) code_.push_back(t.index);
  }

  Ast source_unit() {
    check_brackets();
    Ast root{AstKind::SourceUnit, {}, {}};
    while (!eof()) {
      if (at("pragma")) {
        root.children.push_back(until_semicolon(AstKind::PragmaDirective));
      } else if (at("import")) {
        root.children.push_back(until_semicolon(AstKind::ImportDirective));
      } else if (at("contract") || at("library") || at("interface") || at("abstract")) {
        root.children.push_back(contract());
      } else if (at("function")) {
        root.children.push_back(recover_member());
      } else if (at("struct") || at("enum") || at("event") || at("using") || at_error_decl()) {
        root.children.push_back(recover_member());
      } else {
        root.children.push_back(statement());
      }
    }
    return root;
  }

private:
  const TokenStream& all_;
  std::vector<std::size_t> code_;
  std::size_t pos_ = 0;
  int depth_ = 0;

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& parser) : p(parser) {
      if (++p.depth_ > kMaxDepth) {
        --p.depth_;
        p.fail(ParseError::Kind::TooDeep, {});
      }
    }
    ~DepthGuard() { --p.depth_; }
  };

  // ---- token access ----------------------------------------------------

  bool eof(std::size_t ahead = 0) const { return pos_ + ahead >= code_.size(); }

  const Token* peek(std::size_t ahead = 0) const {
    return eof(ahead) ? nullptr : &all_[code_[pos_ + ahead]];
  }

  bool at(std::string_view text, std::size_t ahead = 0) const {
    const Token* t = peek(ahead);
    return t && t->kind != TokenKind::String && t->kind != TokenKind::Number && t->text == text;
  }

  bool at_kind(TokenKind kind, std::size_t ahead = 0) const {
    const Token* t = peek(ahead);
    return t && t->kind == kind;
  }

  bool at_identifier(std::string_view text, std::size_t ahead = 0) const {
    const Token* t = peek(ahead);
    return t && t->kind == TokenKind::Identifier && t->text == text;
  }

  bool at_error_decl() const {
    return at_identifier("error") && at_kind(TokenKind::Identifier, 1) && at("(", 2);
  }

  std::size_t current_offset() const {
    if (const Token* t = peek()) return t->span.begin;
    return all_.empty() ? 0 : all_.back().span.end;
  }

  [[noreturn]] void fail(ParseError::Kind kind, std::vector<std::string> expected) const {
    const Token* t = peek();
    std::string found = t ? std::string(to_string(t->kind)) + " '" + t->text + "'"
                          : std::string("end of input");
    throw ParseError(kind, std::move(expected), current_offset(), std::move(found));
  }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    fail(ParseError::Kind::UnexpectedToken, std::move(expected));
  }

  Ast terminal() {
    if (eof()) fail({"token"});
    return Ast{AstKind::Terminal, {}, code_[pos_++]};
  }

  Ast expect(std::string_view text) {
    if (!at(text)) fail({std::string(text)});
    return terminal();
  }

  Ast expect_identifier() {
    if (!at_kind(TokenKind::Identifier)) fail({"identifier"});
    return terminal();
  }

  // ---- structural helpers ------------------------------------------------

  void check_brackets() const {
    std::vector<const Token*> stack;
    auto opener_for = [](char c) { return c == ')' ? '(' : c == ']' ? '[' : '{'; };
    for (std::size_t idx : code_) {
      const Token& t = all_[idx];
      if (t.kind != TokenKind::Punctuation || t.text.size() != 1) continue;
      const char c = t.text[0];
      if (c == '(' || c == '[' || c == '{') {
        stack.push_back(&t);
      } else if (c == ')' || c == ']' || c == '}') {
        if (stack.empty() || stack.back()->text[0] != opener_for(c))
          throw ParseError(ParseError::Kind::UnbalancedBrackets, {}, t.span.begin,
                           "'" + t.text + "'");
        stack.pop_back();
      }
    }
    if (!stack.empty())
      throw ParseError(ParseError::Kind::UnbalancedBrackets, {}, stack.back()->span.begin,
                       "'" + stack.back()->text + "'");
  }

  Ast until_semicolon(AstKind kind) {
    Ast node{kind, {}, {}};
    while (!eof() && !at(";")) node.children.push_back(terminal());
    node.children.push_back(expect(";"));
    return node;
  }

  // Consumes one bracket-balanced construct: up to and including a ';' at
  // depth zero, up to and including a '{...}' opened at depth zero, or up to
  // (excluding) the '}' closing the enclosing block.
  Ast opaque() {
    Ast node{AstKind::OpaqueStatement, {}, {}};
    const std::size_t start = pos_;
    int depth = 0;
    while (!eof()) {
      const Token& t = *peek();
      const bool punct = t.kind == TokenKind::Punctuation;
      if (punct && depth == 0 && t.text == "}") break;
      if (punct && depth == 0 && t.text == ";") {
        pos_++;
        break;
      }
      if (punct && (t.text == "(" || t.text == "[" || t.text == "{")) {
        ++depth;
      } else if (punct && (t.text == ")" || t.text == "]" || t.text == "}")) {
        --depth;
        if (depth == 0 && t.text == "}") {
          pos_++;
          break;
        }
      }
      pos_++;
    }
    if (pos_ == start) fail({"statement"});
    for (std::size_t k = start; k < pos_; ++k) {
      const Token& t = all_[code_[k]];
      const bool after_dot = k > start && all_[code_[k - 1]].text == ".";
      const bool before_call = k + 1 < pos_ && all_[code_[k + 1]].text == "(";
      Ast leaf{AstKind::Terminal, {}, code_[k]};
      if (t.kind == TokenKind::Identifier && !after_dot && !before_call) {
        node.children.push_back(Ast{AstKind::Identifier, {std::move(leaf)}, {}});
      } else {
        node.children.push_back(std::move(leaf));
      }
    }
    return node;
  }

  template <class F>
  Ast recover(F&& parse_fn) {
    const std::size_t start = pos_;
    const int depth = depth_;
    try {
      return parse_fn();
    } catch (const ParseError& e) {
      if (e.kind() != ParseError::Kind::UnexpectedToken) throw;
      pos_ = start;
      depth_ = depth;
      return opaque();
    }
  }

  // ---- contracts -----------------------------------------------------------

  Ast contract() {
    DepthGuard guard(*this);
    Ast node{AstKind::ContractDecl, {}, {}};
    if (at("abstract")) node.children.push_back(terminal());
    if (!(at("contract") || at("library") || at("interface")))
      fail({"contract", "library", "interface"});
    node.children.push_back(terminal());
    node.children.push_back(expect_identifier());
    if (at("is")) {
      Ast inh{AstKind::InheritanceSpecifier, {}, {}};
      inh.children.push_back(terminal());
      while (true) {
        inh.children.push_back(expect_identifier());
        while (at(".")) {
          inh.children.push_back(terminal());
          inh.children.push_back(expect_identifier());
        }
        if (at("(")) inh.children.push_back(call_suffix_args());
        if (!at(",")) break;
        inh.children.push_back(terminal());
      }
      node.children.push_back(std::move(inh));
    }
    node.children.push_back(expect("{"));
    while (!eof() && !at("}")) node.children.push_back(recover_member());
    node.children.push_back(expect("}"));
    return node;
  }

  Ast recover_member() {
    return recover([this] { return member(); });
  }

  Ast member() {
    DepthGuard guard(*this);
    if (at("function") || at("constructor") || at("modifier") ||
        ((at_identifier("fallback") || at_identifier("receive")) && at("(", 1)))
      return function_like();
    if (at("struct")) return struct_decl();
    if (at("enum")) return enum_decl();
    if (at("event")) return event_or_error(AstKind::EventDecl);
    if (at_error_decl()) return event_or_error(AstKind::ErrorDecl);
    if (at("using")) return until_semicolon(AstKind::UsingDirective);
    return state_variable();
  }

  Ast struct_decl() {
    Ast node{AstKind::StructDecl, {}, {}};
    node.children.push_back(expect("struct"));
    node.children.push_back(expect_identifier());
    node.children.push_back(expect("{"));
    while (!at("}")) {
      node.children.push_back(type_name());
      node.children.push_back(expect_identifier());
      node.children.push_back(expect(";"));
    }
    node.children.push_back(expect("}"));
    return node;
  }

  Ast enum_decl() {
    Ast node{AstKind::EnumDecl, {}, {}};
    node.children.push_back(expect("enum"));
    node.children.push_back(expect_identifier());
    node.children.push_back(expect("{"));
    while (!at("}")) {
      node.children.push_back(expect_identifier());
      if (at(",")) node.children.push_back(terminal());
    }
    node.children.push_back(expect("}"));
    return node;
  }

  Ast event_or_error(AstKind kind) {
    Ast node{kind, {}, {}};
    node.children.push_back(terminal());  // 'event' / 'error'
    node.children.push_back(expect_identifier());
    node.children.push_back(parameter_list(false));
    if (at("anonymous")) node.children.push_back(terminal());
    node.children.push_back(expect(";"));
    return node;
  }

  Ast state_variable() {
    Ast node{AstKind::StateVariableDecl, {}, {}};
    node.children.push_back(type_name());
    while (true) {
      if (const Token* t = peek(); t && t->kind == TokenKind::Keyword &&
                                   state_var_attributes().contains(t->text)) {
        node.children.push_back(terminal());
      } else if (at("override")) {
        node.children.push_back(terminal());
        if (at("(")) append_balanced(node);
      } else {
        break;
      }
    }
    node.children.push_back(variable_name());
    if (at("=")) {
      node.children.push_back(terminal());
      node.children.push_back(expression());
    }
    node.children.push_back(expect(";"));
    return node;
  }

  Ast variable_name() {
    return Ast{AstKind::VariableName, {expect_identifier()}, {}};
  }

  // Appends a balanced parenthesised group as terminals.
  void append_balanced(Ast& node) {
    int depth = 0;
    do {
      if (at("(")) ++depth;
      if (at(")")) --depth;
      node.children.push_back(terminal());
    } while (depth > 0 && !eof());
  }

  Ast function_like() {
    const bool is_modifier = at("modifier");
    Ast node{is_modifier ? AstKind::ModifierDecl : AstKind::FunctionDecl, {}, {}};
    const bool is_function = at("function");
    node.children.push_back(terminal());
    if ((is_function || is_modifier) && at_kind(TokenKind::Identifier))
      node.children.push_back(terminal());
    if (!is_modifier || at("(")) node.children.push_back(parameter_list(true));
    while (!eof() && !at("{") && !at(";")) {
      const Token& t = *peek();
      if (t.kind == TokenKind::Keyword && function_attributes().contains(t.text)) {
        node.children.push_back(terminal());
      } else if (at("override")) {
        node.children.push_back(terminal());
        if (at("(")) append_balanced(node);
      } else if (at("returns")) {
        node.children.push_back(terminal());
        node.children.push_back(parameter_list(true));
      } else if (t.kind == TokenKind::Identifier) {
        Ast inv{AstKind::ModifierInvocation, {}, {}};
        inv.children.push_back(terminal());
        while (at(".")) {
          inv.children.push_back(terminal());
          inv.children.push_back(expect_identifier());
        }
        if (at("(")) {
          Ast args = call_suffix_args();
          for (auto& c : args.children) inv.children.push_back(std::move(c));
        }
        node.children.push_back(std::move(inv));
      } else {
        fail({"{", ";", "returns", "modifier"});
      }
    }
    if (at(";")) {
      node.children.push_back(terminal());
    } else {
      node.children.push_back(block());
    }
    return node;
  }

  Ast parameter_list(bool named_variables) {
    Ast node{AstKind::ParameterList, {}, {}};
    node.children.push_back(expect("("));
    while (!at(")")) {
      Ast param{AstKind::Parameter, {}, {}};
      param.children.push_back(type_name());
      while (const Token* t = peek()) {
        if (t->kind == TokenKind::Keyword &&
            (data_locations().contains(t->text) || t->text == "indexed")) {
          param.children.push_back(terminal());
        } else {
          break;
        }
      }
      if (at_kind(TokenKind::Identifier)) {
        if (named_variables) {
          param.children.push_back(variable_name());
        } else {
          param.children.push_back(terminal());
        }
      }
      node.children.push_back(std::move(param));
      if (!at(",")) break;
      node.children.push_back(terminal());
    }
    node.children.push_back(expect(")"));
    return node;
  }

  // ---- types -----------------------------------------------------------------

  Ast type_name() {
    DepthGuard guard(*this);
    Ast node{AstKind::TypeName, {}, {}};
    if (at("mapping")) {
      node.kind = AstKind::MappingType;
      node.children.push_back(terminal());
      node.children.push_back(expect("("));
      node.children.push_back(type_name());
      if (at_kind(TokenKind::Identifier)) node.children.push_back(terminal());
      node.children.push_back(expect("=>"));
      node.children.push_back(type_name());
      if (at_kind(TokenKind::Identifier)) node.children.push_back(terminal());
      node.children.push_back(expect(")"));
    } else if (at("function")) {
      node.children.push_back(terminal());
      node.children.push_back(parameter_list(false));
      while (const Token* t = peek()) {
        if (t->kind == TokenKind::Keyword && function_attributes().contains(t->text)) {
          node.children.push_back(terminal());
        } else if (at("returns")) {
          node.children.push_back(terminal());
          node.children.push_back(parameter_list(false));
        } else {
          break;
        }
      }
    } else if (const Token* t = peek(); t && is_elementary(*t)) {
      const bool is_address = t->text == "address";
      node.children.push_back(terminal());
      if (is_address && at("payable")) node.children.push_back(terminal());
    } else if (at_kind(TokenKind::Identifier)) {
      node.children.push_back(terminal());
      while (at(".") && at_kind(TokenKind::Identifier, 1)) {
        node.children.push_back(terminal());
        node.children.push_back(terminal());
      }
    } else {
      fail({"type name"});
    }
    while (at("[")) {
      Ast arr{AstKind::ArrayType, {}, {}};
      arr.children.push_back(std::move(node));
      arr.children.push_back(terminal());
      if (!at("]")) arr.children.push_back(expression());
      arr.children.push_back(expect("]"));
      node = std::move(arr);
    }
    return node;
  }

  // ---- statements --------------------------------------------------------------

  Ast statement() {
    return recover([this] { return statement_inner(); });
  }

  Ast block() {
    DepthGuard guard(*this);
    Ast node{AstKind::Block, {}, {}};
    node.children.push_back(expect("{"));
    while (!eof() && !at("}")) node.children.push_back(statement());
    node.children.push_back(expect("}"));
    return node;
  }

  Ast statement_inner() {
    DepthGuard guard(*this);
    if (at("{")) return block();
    if (at("if")) {
      Ast node{AstKind::IfStatement, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(expect("("));
      node.children.push_back(expression());
      node.children.push_back(expect(")"));
      node.children.push_back(statement());
      if (at("else")) {
        node.children.push_back(terminal());
        node.children.push_back(statement());
      }
      return node;
    }
    if (at("for")) return for_statement();
    if (at("while")) {
      Ast node{AstKind::WhileStatement, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(expect("("));
      node.children.push_back(expression());
      node.children.push_back(expect(")"));
      node.children.push_back(statement());
      return node;
    }
    if (at("do")) {
      Ast node{AstKind::DoWhileStatement, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(statement());
      node.children.push_back(expect("while"));
      node.children.push_back(expect("("));
      node.children.push_back(expression());
      node.children.push_back(expect(")"));
      node.children.push_back(expect(";"));
      return node;
    }
    if (at("return")) {
      Ast node{AstKind::ReturnStatement, {}, {}};
      node.children.push_back(terminal());
      if (!at(";")) node.children.push_back(expression());
      node.children.push_back(expect(";"));
      return node;
    }
    if (at("emit")) {
      Ast node{AstKind::EmitStatement, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(expression());
      node.children.push_back(expect(";"));
      return node;
    }
    if (at("break") || at("continue") || at("throw")) {
      const AstKind kind = at("break")      ? AstKind::BreakStatement
                           : at("continue") ? AstKind::ContinueStatement
                                            : AstKind::ThrowStatement;
      Ast node{kind, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(expect(";"));
      return node;
    }
    if (at("unchecked") && at("{", 1)) {
      Ast node{AstKind::Block, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(block());
      return node;
    }
    if (at("assembly") || at("try")) return opaque();
    if (at("var")) return var_statement();
    if (at("(")) {
      if (auto decl = try_tuple_declaration()) return std::move(*decl);
    }
    if (auto decl = try_declaration()) return std::move(*decl);
    Ast node{AstKind::ExpressionStatement, {}, {}};
    node.children.push_back(expression());
    node.children.push_back(expect(";"));
    return node;
  }

  Ast for_statement() {
    Ast node{AstKind::ForStatement, {}, {}};
    node.children.push_back(terminal());
    node.children.push_back(expect("("));
    if (at(";")) {
      node.children.push_back(terminal());
    } else {
      node.children.push_back(simple_statement());
    }
    if (!at(";")) node.children.push_back(expression());
    node.children.push_back(expect(";"));
    if (!at(")")) node.children.push_back(expression());
    node.children.push_back(expect(")"));
    node.children.push_back(statement());
    return node;
  }

  Ast simple_statement() {
    if (at("var")) return var_statement();
    if (auto decl = try_declaration()) return std::move(*decl);
    Ast node{AstKind::ExpressionStatement, {}, {}};
    node.children.push_back(expression());
    node.children.push_back(expect(";"));
    return node;
  }

  Ast var_statement() {
    Ast node{AstKind::VariableDeclStatement, {}, {}};
    node.children.push_back(terminal());
    if (at("(")) {
      node.children.push_back(terminal());
      while (!at(")")) {
        if (at_kind(TokenKind::Identifier)) node.children.push_back(variable_name());
        if (!at(",")) break;
        node.children.push_back(terminal());
      }
      node.children.push_back(expect(")"));
    } else {
      node.children.push_back(variable_name());
    }
    if (at("=")) {
      node.children.push_back(terminal());
      node.children.push_back(expression());
    }
    node.children.push_back(expect(";"));
    return node;
  }

  bool declaration_may_start() const {
    const Token* t = peek();
    if (!t) return false;
    if (t->kind == TokenKind::Identifier) return true;
    if (t->text == "mapping") return true;
    if (is_elementary(*t)) return !at("(", 1);
    return false;
  }

  std::optional<Ast> try_declaration() {
    if (!declaration_may_start()) return std::nullopt;
    const std::size_t start = pos_;
    const int depth = depth_;
    Ast type;
    try {
      type = type_name();
    } catch (const ParseError&) {
      pos_ = start;
      depth_ = depth;
      return std::nullopt;
    }
    Ast node{AstKind::VariableDeclStatement, {}, {}};
    node.children.push_back(std::move(type));
    while (const Token* t = peek()) {
      if (t->kind == TokenKind::Keyword && data_locations().contains(t->text)) {
        node.children.push_back(terminal());
      } else {
        break;
      }
    }
    if (!at_kind(TokenKind::Identifier)) {
      pos_ = start;
      return std::nullopt;
    }
    node.children.push_back(variable_name());
    if (at("=")) {
      node.children.push_back(terminal());
      node.children.push_back(expression());
    }
    node.children.push_back(expect(";"));
    return node;
  }

  // (uint a, , bool b) = expr;
  std::optional<Ast> try_tuple_declaration() {
    const std::size_t start = pos_;
    const int depth = depth_;
    try {
      Ast node{AstKind::VariableDeclStatement, {}, {}};
      node.children.push_back(expect("("));
      bool any = false;
      while (!at(")")) {
        if (!at(",")) {
          Ast param{AstKind::Parameter, {}, {}};
          param.children.push_back(type_name());
          while (const Token* t = peek()) {
            if (t->kind == TokenKind::Keyword && data_locations().contains(t->text)) {
              param.children.push_back(terminal());
            } else {
              break;
            }
          }
          param.children.push_back(variable_name());
          node.children.push_back(std::move(param));
          any = true;
        }
        if (!at(",")) break;
        node.children.push_back(terminal());
      }
      node.children.push_back(expect(")"));
      if (!any || !at("=")) throw ParseError(ParseError::Kind::UnexpectedToken, {"="}, 0, "");
      node.children.push_back(terminal());
      node.children.push_back(expression());
      node.children.push_back(expect(";"));
      return node;
    } catch (const ParseError&) {
      pos_ = start;
      depth_ = depth;
      return std::nullopt;
    }
  }

  // ---- expressions ---------------------------------------------------------------

  Ast expression() {
    DepthGuard guard(*this);
    Ast lhs = conditional();
    if (const Token* t = peek();
        t && t->kind == TokenKind::Punctuation && assignment_ops().contains(t->text)) {
      Ast node{AstKind::Assignment, {}, {}};
      node.children.push_back(std::move(lhs));
      node.children.push_back(terminal());
      node.children.push_back(expression());
      return node;
    }
    return lhs;
  }

  Ast conditional() {
    Ast cond = binary(1);
    if (!at("?")) return cond;
    Ast node{AstKind::ConditionalExpr, {}, {}};
    node.children.push_back(std::move(cond));
    node.children.push_back(terminal());
    node.children.push_back(expression());
    node.children.push_back(expect(":"));
    node.children.push_back(expression());
    return node;
  }

  Ast binary(int min_prec) {
    DepthGuard guard(*this);
    Ast lhs = unary();
    while (const Token* t = peek()) {
      if (t->kind != TokenKind::Punctuation) break;
      const int prec = binary_precedence(t->text);
      if (prec < 0 || prec < min_prec) break;
      const bool right_assoc = t->text == "**";
      Ast node{AstKind::BinaryExpr, {}, {}};
      node.children.push_back(std::move(lhs));
      node.children.push_back(terminal());
      node.children.push_back(binary(right_assoc ? prec : prec + 1));
      lhs = std::move(node);
    }
    return lhs;
  }

  Ast unary() {
    DepthGuard guard(*this);
    if (at("!") || at("~") || at("-") || at("+") || at("++") || at("--") || at("delete")) {
      Ast node{AstKind::UnaryExpr, {}, {}};
      node.children.push_back(terminal());
      node.children.push_back(unary());
      return node;
    }
    return postfix();
  }

  Ast call_suffix_args() {
    Ast node{AstKind::CallExpr, {}, {}};
    node.children.push_back(expect("("));
    if (at("{")) {
      node.children.push_back(named_arguments());
    } else {
      while (!at(")")) {
        node.children.push_back(expression());
        if (!at(",")) break;
        node.children.push_back(terminal());
      }
    }
    node.children.push_back(expect(")"));
    return node;
  }

  Ast named_arguments() {
    Ast node{AstKind::NamedArguments, {}, {}};
    node.children.push_back(expect("{"));
    while (!at("}")) {
      node.children.push_back(expect_identifier());
      node.children.push_back(expect(":"));
      node.children.push_back(expression());
      if (!at(",")) break;
      node.children.push_back(terminal());
    }
    node.children.push_back(expect("}"));
    return node;
  }

  Ast postfix() {
    Ast expr = primary();
    while (true) {
      if (at(".")) {
        const Token* member = peek(1);
        if (!member ||
            (member->kind != TokenKind::Identifier && member->kind != TokenKind::Keyword)) {
          pos_++;
          fail({"member name"});
        }
        Ast node{AstKind::MemberAccess, {}, {}};
        node.children.push_back(std::move(expr));
        node.children.push_back(terminal());
        node.children.push_back(terminal());
        expr = std::move(node);
      } else if (at("[")) {
        Ast node{AstKind::IndexAccess, {}, {}};
        node.children.push_back(std::move(expr));
        node.children.push_back(terminal());
        if (!at("]") && !at(":")) node.children.push_back(expression());
        if (at(":")) {
          node.children.push_back(terminal());
          if (!at("]")) node.children.push_back(expression());
        }
        node.children.push_back(expect("]"));
        expr = std::move(node);
      } else if (at("(")) {
        Ast call = call_suffix_args();
        call.children.insert(call.children.begin(), std::move(expr));
        expr = std::move(call);
      } else if (at("{") && at_kind(TokenKind::Identifier, 1) && at(":", 2)) {
        Ast node{AstKind::CallOptions, {}, {}};
        node.children.push_back(std::move(expr));
        Ast opts = named_arguments();
        for (auto& c : opts.children) node.children.push_back(std::move(c));
        expr = std::move(node);
      } else if (at("++") || at("--")) {
        Ast node{AstKind::UnaryExpr, {}, {}};
        node.children.push_back(std::move(expr));
        node.children.push_back(terminal());
        expr = std::move(node);
      } else {
        break;
      }
    }
    return expr;
  }

  Ast primary() {
    DepthGuard guard(*this);
    const Token* t = peek();
    if (!t) fail({"expression"});
    switch (t->kind) {
      case TokenKind::Identifier: {
        if ((t->text == "hex" || t->text == "unicode") && at_kind(TokenKind::String, 1)) {
          Ast node{AstKind::Literal, {}, {}};
          node.children.push_back(terminal());
          while (at_kind(TokenKind::String)) node.children.push_back(terminal());
          return node;
        }
        return Ast{AstKind::Identifier, {terminal()}, {}};
      }
      case TokenKind::Number: {
        Ast node{AstKind::Literal, {}, {}};
        node.children.push_back(terminal());
        if (const Token* u = peek();
            u && u->kind == TokenKind::Keyword && literal_units().contains(u->text))
          node.children.push_back(terminal());
        return node;
      }
      case TokenKind::String: {
        Ast node{AstKind::Literal, {}, {}};
        while (at_kind(TokenKind::String)) node.children.push_back(terminal());
        return node;
      }
      case TokenKind::Keyword: {
        if (t->text == "true" || t->text == "false" || t->text == "this" || t->text == "super")
          return Ast{AstKind::Literal, {terminal()}, {}};
        if (t->text == "new") {
          Ast node{AstKind::NewExpr, {}, {}};
          node.children.push_back(terminal());
          node.children.push_back(type_name());
          return node;
        }
        if (is_elementary(*t) || t->text == "payable") {
          Ast node{AstKind::ElementaryTypeExpr, {}, {}};
          node.children.push_back(terminal());
          if (t->text == "address" && at("payable")) node.children.push_back(terminal());
          // uint[] / bytes32[2] in expression position (e.g. abi.decode types)
          while (at("[")) {
            node.children.push_back(terminal());
            if (!at("]")) node.children.push_back(expression());
            node.children.push_back(expect("]"));
          }
          return node;
        }
        break;
      }
      case TokenKind::Punctuation: {
        if (t->text == "(" || t->text == "[") {
          const std::string close = t->text == "(" ? ")" : "]";
          Ast node{AstKind::TupleExpr, {}, {}};
          node.children.push_back(terminal());
          while (!at(close)) {
            if (!at(",")) node.children.push_back(expression());
            if (!at(",")) break;
            node.children.push_back(terminal());
          }
          node.children.push_back(expect(close));
          return node;
        }
        break;
      }
      case TokenKind::Comment: break;
    }
    fail({"expression"});
  }
};

}  // namespace

Ast parse(const TokenStream& tokens) {
  Parser parser(tokens);
  return parser.source_unit();
}

Ast parse_source(std::string_view source, TokenStream* tokens_out) {
  TokenStream tokens = lex(source);
  Ast ast = parse(tokens);
  if (tokens_out) *tokens_out = std::move(tokens);
  return ast;
}

namespace {
void collect_leaves(const Ast& node, std::vector<std::size_t>& out) {
  if (node.token) out.push_back(*node.token);
  for (const auto& c : node.children) collect_leaves(c, out);
}
}  // namespace

std::vector<std::size_t> leaf_tokens(const Ast& node) {
  std::vector<std::size_t> out;
  collect_leaves(node, out);
  return out;
}

Span span_of(const Ast& node, const TokenStream& tokens) {
  const auto leaves = leaf_tokens(node);
  if (leaves.empty()) return {};
  return Span{tokens[leaves.front()].span.begin, tokens[leaves.back()].span.end};
}

}  // namespace sourcep::solparse
