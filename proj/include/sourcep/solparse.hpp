#pragma once

#include "sourcep/error.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sourcep::solparse {

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

enum class TokenKind { Identifier, Keyword, Number, String, Punctuation, Comment };

std::string_view to_string(TokenKind kind);

/// Half-open byte range [begin, end) into the original source.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

struct Token {
  TokenKind kind = TokenKind::Punctuation;
  std::string text;
  Span span;
  std::size_t index = 0;  // ordinal in the full stream, comments included

  bool operator==(const Token&) const = default;
};

using TokenStream = std::vector<Token>;

class LexError : public Error {
public:
  enum class Kind { UnterminatedString, UnterminatedComment, IllegalCharacter };

  LexError(Kind kind, std::size_t offset);

  Kind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

private:
  Kind kind_;
  std::size_t offset_;
};

/// Splits Solidity source into tokens. Whitespace is not tokenized; the gaps
/// between consecutive spans are exactly the whitespace of the input.
TokenStream lex(std::string_view source);

/// Rebuilds the source from tokens plus the original text between spans.
std::string reconstruct(const TokenStream& tokens, std::string_view source);

// ---------------------------------------------------------------------------
// Syntax tree
// ---------------------------------------------------------------------------

enum class AstKind {
  SourceUnit,
  PragmaDirective,
  ImportDirective,
  ContractDecl,
  InheritanceSpecifier,
  UsingDirective,
  StateVariableDecl,
  StructDecl,
  EnumDecl,
  EventDecl,
  ErrorDecl,
  ModifierDecl,
  FunctionDecl,
  ParameterList,
  Parameter,
  ModifierInvocation,
  TypeName,
  MappingType,
  ArrayType,
  VariableName,
  Block,
  VariableDeclStatement,
  ExpressionStatement,
  IfStatement,
  ForStatement,
  WhileStatement,
  DoWhileStatement,
  ReturnStatement,
  EmitStatement,
  BreakStatement,
  ContinueStatement,
  ThrowStatement,
  OpaqueStatement,
  Assignment,
  BinaryExpr,
  UnaryExpr,
  ConditionalExpr,
  CallExpr,
  CallOptions,
  NamedArguments,
  MemberAccess,
  IndexAccess,
  Identifier,
  Literal,
  TupleExpr,
  NewExpr,
  ElementaryTypeExpr,
  Terminal,
};

std::string_view to_string(AstKind kind);

/// Concrete syntax tree: every non-comment token appears as exactly one
/// Terminal leaf, in source order.
struct Ast {
  AstKind kind = AstKind::SourceUnit;
  std::vector<Ast> children;
  std::optional<std::size_t> token;  // set iff kind == Terminal

  bool is_terminal() const noexcept { return kind == AstKind::Terminal; }
};

class ParseError : public Error {
public:
  enum class Kind { UnexpectedToken, UnbalancedBrackets, TooDeep };

  ParseError(Kind kind, std::vector<std::string> expected, std::size_t offset,
             std::string found);

  Kind kind() const noexcept { return kind_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }
  std::size_t offset() const noexcept { return offset_; }

private:
  Kind kind_;
  std::vector<std::string> expected_;
  std::size_t offset_;
};

/// Parses a token stream produced by `lex`. Besides full source units, bare
/// statements at top level are accepted so that fragments can be analysed.
/// Constructs outside the supported subset become OpaqueStatement nodes.
Ast parse(const TokenStream& tokens);

/// Convenience: lex + parse.
Ast parse_source(std::string_view source, TokenStream* tokens_out = nullptr);

/// Byte span covered by a node (empty span for leaf-less nodes).
Span span_of(const Ast& node, const TokenStream& tokens);

/// Terminal leaves in order.
std::vector<std::size_t> leaf_tokens(const Ast& node);

// ---------------------------------------------------------------------------
// Variable identification
// ---------------------------------------------------------------------------

using AstPath = std::vector<std::size_t>;

struct LeafIdentifier {
  std::size_t token = 0;  // root identifier token (Token::index)
  std::string name;       // dotted for member chains, e.g. "msg.sender"
  AstPath path;           // child indices from the root to the Terminal leaf
};

/// Identifier leaves in variable positions, in source order.
///
/// Excluded: type names, function/contract/event names at declaration sites,
/// callee names, struct fields, and roots that name a contract, struct or
/// enum declared in the same unit. Identifier/member chains such as
/// `msg.sender` collapse into one dotted variable anchored at the root token;
/// a chain used as a callee (`owner.transfer(x)`) contributes its base only.
std::vector<LeafIdentifier> leaf_identifiers(const Ast& ast, const TokenStream& tokens);

/// The classification behind `leaf_identifiers`, reusable on subtrees.
class VariableScanner {
public:
  VariableScanner(const Ast& root, const TokenStream& tokens);

  /// Variable occurrences inside `node`; `path` is the node's own path.
  std::vector<LeafIdentifier> scan(const Ast& node, AstPath path = {}) const;

  /// If `node` is an identifier or member chain naming a variable, that
  /// variable (path relative to `node`).
  std::optional<LeafIdentifier> chain(const Ast& node) const;

  const TokenStream& tokens() const noexcept { return *tokens_; }

private:
  void visit(const Ast& node, AstPath& path, std::vector<LeafIdentifier>& out) const;
  void visit_callee(const Ast& node, AstPath& path, std::vector<LeafIdentifier>& out) const;

  const TokenStream* tokens_;
  std::vector<std::string> type_names_;  // sorted
};

/// Roots treated as chain-wide globals (msg, block, tx).
bool is_global_root(std::string_view name);

}  // namespace sourcep::solparse
