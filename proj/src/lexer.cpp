#include "sourcep/solparse.hpp"

#include <algorithm>
#include <array>
#include <unordered_set>

namespace sourcep::solparse {

namespace {

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> set = [] {
    std::unordered_set<std::string_view> s = {
        "abstract", "address", "anonymous", "as", "assembly", "bool", "break", "byte",
        "bytes", "calldata", "catch", "constant", "constructor", "continue", "contract",
        "days", "delete", "do", "else", "emit", "enum", "ether", "event", "external",
        "false", "finney", "fixed", "for", "function", "gwei", "hours", "if", "immutable",
        "import", "indexed", "interface", "internal", "is", "library", "mapping", "memory",
        "minutes", "modifier", "new", "override", "payable", "pragma", "private", "public",
        "pure", "return", "returns", "seconds", "storage", "string", "struct", "super",
        "szabo", "this", "throw", "true", "try", "ufixed", "unchecked", "using", "var",
        "view", "virtual", "weeks", "wei", "while", "years", "int", "uint"};
    return s;
  }();
  return set;
}

// uintN / intN / bytesN families.
bool is_sized_type(std::string_view w) {
  auto digits_in = [](std::string_view d, int lo, int hi) {
    if (d.empty() || d.size() > 3 || d.front() == '0') return false;
    int v = 0;
    for (char c : d) {
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    return v >= lo && v <= hi;
  };
  if (w.starts_with("uint")) return digits_in(w.substr(4), 8, 256);
  if (w.starts_with("int")) return digits_in(w.substr(3), 8, 256);
  if (w.starts_with("bytes")) return digits_in(w.substr(5), 1, 32);
  return false;
}

bool ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$';
}
bool ident_part(unsigned char c) { return ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_hex(unsigned char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

constexpr std::array<std::string_view, 30> kMultiPunct = {
    ">>>=", ">>>", "<<=", ">>=", "**", "==", "!=", "<=", ">=", "&&",
    "||",   "++",  "--",  "+=",  "-=", "*=", "/=", "%=", "|=", "&=",
    "^=",   "<<",  ">>",  "=>",  "->", ":=", "",   "",   "",   ""};
constexpr std::string_view kSinglePunct = "(){}[];,.?:=+-*/%<>!~&|^";

}  // namespace

std::string_view to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Number: return "number";
    case TokenKind::String: return "string";
    case TokenKind::Punctuation: return "punctuation";
    case TokenKind::Comment: return "comment";
  }
  return "?";
}

namespace {
std::string lex_message(LexError::Kind kind, std::size_t offset) {
  std::string what;
  switch (kind) {
    case LexError::Kind::UnterminatedString: what = "unterminated string"; break;
    case LexError::Kind::UnterminatedComment: what = "unterminated comment"; break;
    case LexError::Kind::IllegalCharacter: what = "illegal character"; break;
  }
  return what + " at byte " + std::to_string(offset);
}
}  // namespace

LexError::LexError(Kind kind, std::size_t offset)
    : Error(lex_message(kind, offset)), kind_(kind), offset_(offset) {}

TokenStream lex(std::string_view src) {
  TokenStream out;
  const std::size_t n = src.size();
  std::size_t i = 0;

  auto push = [&](TokenKind kind, std::size_t begin, std::size_t end) {
    std::string text(src.substr(begin, end - begin));
    if (kind == TokenKind::Identifier &&
        (keywords().contains(text) || is_sized_type(text)))
      kind = TokenKind::Keyword;
    out.push_back(Token{kind, std::move(text), Span{begin, end}, out.size()});
  };

  while (i < n) {
    const auto c = static_cast<unsigned char>(src[i]);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      ++i;
      continue;
    }
    const std::size_t start = i;

    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') ++i;
      // keep a trailing '\r' out of the comment so CRLF files round-trip cleanly
      std::size_t end = i;
      if (end > start && src[end - 1] == '\r') --end;
      push(TokenKind::Comment, start, end);
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      const auto close = src.find("*/", i + 2);
      if (close == std::string_view::npos)
        throw LexError(LexError::Kind::UnterminatedComment, start);
      i = close + 2;
      push(TokenKind::Comment, start, i);
      continue;
    }
    if (c == '"' || c == '\'') {
      ++i;
      bool closed = false;
      while (i < n) {
        if (src[i] == '\\') {
          i += 2;
          continue;
        }
        if (static_cast<unsigned char>(src[i]) == c) {
          ++i;
          closed = true;
          break;
        }
        ++i;
      }
      if (!closed) throw LexError(LexError::Kind::UnterminatedString, start);
      push(TokenKind::String, start, std::min(i, n));
      continue;
    }
    if (ident_start(c)) {
      while (i < n && ident_part(static_cast<unsigned char>(src[i]))) ++i;
      push(TokenKind::Identifier, start, i);
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(static_cast<unsigned char>(src[i + 1])))) {
      if (c == '0' && i + 1 < n && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
        i += 2;
        while (i < n && (is_hex(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
      } else {
        while (i < n && (is_digit(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
        if (i + 1 < n && src[i] == '.' && is_digit(static_cast<unsigned char>(src[i + 1]))) {
          ++i;
          while (i < n && (is_digit(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
        }
        if (i < n && (src[i] == 'e' || src[i] == 'E')) {
          std::size_t j = i + 1;
          if (j < n && (src[j] == '-' || src[j] == '+')) ++j;
          if (j < n && is_digit(static_cast<unsigned char>(src[j]))) {
            i = j;
            while (i < n && is_digit(static_cast<unsigned char>(src[i]))) ++i;
          }
        }
      }
      push(TokenKind::Number, start, i);
      continue;
    }
    bool matched = false;
    for (auto p : kMultiPunct) {
      if (!p.empty() && src.substr(i, p.size()) == p) {
        i += p.size();
        push(TokenKind::Punctuation, start, i);
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (kSinglePunct.find(static_cast<char>(c)) != std::string_view::npos) {
      ++i;
      push(TokenKind::Punctuation, start, i);
      continue;
    }
    throw LexError(LexError::Kind::IllegalCharacter, start);
  }
  return out;
}

std::string reconstruct(const TokenStream& tokens, std::string_view source) {
  std::string out;
  out.reserve(source.size());
  std::size_t cursor = 0;
  for (const auto& t : tokens) {
    out.append(source.substr(cursor, t.span.begin - cursor));
    out.append(t.text);
    cursor = t.span.end;
  }
  out.append(source.substr(std::min(cursor, source.size())));
  return out;
}

}  // namespace sourcep::solparse
