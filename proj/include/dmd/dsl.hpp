#pragma once

// Front end for the affine loop DSL:
//
//   program    ::= param-decl* array-decl* stmt*
//   param-decl ::= 'params' id (',' id)* ';'
//   array-decl ::= 'array' id '[' expr-list ']' ';'
//   stmt       ::= for-stmt | if-stmt | access-stmt
//   for-stmt   ::= 'for' id 'in' expr '..' expr ('step' integer)? block
//   if-stmt    ::= 'if' cond ('&&' cond)* block ('else' block)?
//   access     ::= ('read' | 'write' | 'update') id '[' expr-list ']' ';'
//
// plus `//` line comments. Lexing and parsing stop at the first error;
// validation reports every violation it finds.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dmd/rational.hpp"

namespace dmd {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const Span&, const Span&) = default;
};

inline Span join(Span a, Span b) { return {std::min(a.begin, b.begin), std::max(a.end, b.end)}; }

struct Diagnostic {
  std::string category;
  std::string message;
  Span span;
};

/// Carries every diagnostic produced by a failed front-end stage.
class DiagnosticError : public std::runtime_error {
 public:
  explicit DiagnosticError(std::vector<Diagnostic> diagnostics)
      : std::runtime_error(summary(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string summary(const std::vector<Diagnostic>& ds) {
    if (ds.empty()) return "invalid program";
    std::string s = ds.front().message;
    if (ds.size() > 1) s += " (and " + std::to_string(ds.size() - 1) + " more)";
    return s;
  }

  std::vector<Diagnostic> diagnostics_;
};

// ---------------------------------------------------------------------------
// Tokens

enum class TokenKind { Keyword, Identifier, Integer, Operator, Delimiter };

struct Token {
  TokenKind kind;
  std::string text;
  Span span;
  std::int64_t value = 0;  // integer literals only
};

inline constexpr std::string_view kKeywords[] = {"params", "array", "for",  "in",    "step",
                                                 "if",     "else",  "read", "write", "update"};

inline bool is_keyword(std::string_view s) {
  return std::find(std::begin(kKeywords), std::end(kKeywords), s) != std::end(kKeywords);
}

inline std::vector<Token> tokenize(std::string_view source) {
  std::vector<Token> out;
  std::vector<Diagnostic> errors;
  std::size_t i = 0;
  const std::size_t n = source.size();
  auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < n) {
    char c = source[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && source[i + 1] == '/') {
      while (i < n && source[i] != '\n') ++i;
      continue;
    }
    std::size_t start = i;
    if (ident_start(c)) {
      while (i < n && ident_char(source[i])) ++i;
      std::string text(source.substr(start, i - start));
      TokenKind kind = is_keyword(text) ? TokenKind::Keyword : TokenKind::Identifier;
      out.push_back({kind, std::move(text), {start, i}});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < n && std::isdigit(static_cast<unsigned char>(source[i]))) ++i;
      std::string text(source.substr(start, i - start));
      std::int64_t value = 0;
      bool overflow = false;
      for (char d : text) {
        if (value > (std::numeric_limits<std::int64_t>::max() - (d - '0')) / 10) {
          overflow = true;
          break;
        }
        value = value * 10 + (d - '0');
      }
      if (overflow) {
        errors.push_back({"lexical", "integer literal out of range: " + text, {start, i}});
        continue;
      }
      out.push_back({TokenKind::Integer, std::move(text), {start, i}, value});
      continue;
    }
    std::string_view two = source.substr(i, 2);
    if (two == ".." || two == "&&" || two == "<=" || two == ">=" || two == "==") {
      i += 2;
      out.push_back({TokenKind::Operator, std::string(two), {start, i}});
      continue;
    }
    if (c == '+' || c == '-' || c == '*' || c == '/' || c == '<' || c == '>') {
      ++i;
      out.push_back({TokenKind::Operator, std::string(1, c), {start, i}});
      continue;
    }
    if (c == '[' || c == ']' || c == '{' || c == '}' || c == '(' || c == ')' || c == ',' ||
        c == ';') {
      ++i;
      out.push_back({TokenKind::Delimiter, std::string(1, c), {start, i}});
      continue;
    }
    // Skip the whole UTF-8 sequence so the span covers one character.
    std::size_t len = 1;
    auto uc = static_cast<unsigned char>(c);
    if (uc >= 0xF0) len = 4;
    else if (uc >= 0xE0) len = 3;
    else if (uc >= 0xC0) len = 2;
    i = std::min(n, i + len);
    errors.push_back({"lexical",
                      "unexpected character '" + std::string(source.substr(start, i - start)) + "'",
                      {start, i}});
  }
  if (!errors.empty()) throw DiagnosticError(std::move(errors));
  return out;
}

// ---------------------------------------------------------------------------
// AST

struct VarRef {
  enum class Scope { Unresolved, Param, Iterator };
  Scope scope = Scope::Unresolved;
  std::size_t index = 0;  // parameter index, or loop depth (0 = outermost)
};

struct Expr {
  enum class Kind { Add, Sub, Mul, FloorDiv, Neg, Const, Var };

  Kind kind = Kind::Const;
  std::int64_t value = 0;
  std::string name;
  std::vector<Expr> operands;
  Span span;
  VarRef ref;  // filled in by validation

  static Expr constant(std::int64_t v, Span s = {}) {
    Expr e;
    e.value = v;
    e.span = s;
    return e;
  }
  static Expr var(std::string n, Span s = {}) {
    Expr e;
    e.kind = Kind::Var;
    e.name = std::move(n);
    e.span = s;
    return e;
  }
  static Expr binary(Kind k, Expr l, Expr r) {
    Expr e;
    e.kind = k;
    e.span = join(l.span, r.span);
    e.operands.push_back(std::move(l));
    e.operands.push_back(std::move(r));
    return e;
  }
  static Expr negate(Expr c, Span s) {
    Expr e;
    e.kind = Kind::Neg;
    e.span = join(s, c.span);
    e.operands.push_back(std::move(c));
    return e;
  }
};

enum class CmpOp { Lt, Le, Eq, Ge, Gt };

inline std::string_view to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "==";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
  }
  return "?";
}

struct Comparison {
  Expr lhs;
  CmpOp op = CmpOp::Lt;
  Expr rhs;
  Span span;
};

enum class AccessKind { Read, Write, Update };

inline std::string_view to_string(AccessKind k) {
  switch (k) {
    case AccessKind::Read: return "read";
    case AccessKind::Write: return "write";
    case AccessKind::Update: return "update";
  }
  return "?";
}

struct Stmt;

struct ForStmt {
  std::string iterator;
  Span iterator_span;
  Expr lower;
  Expr upper;
  std::int64_t step = 1;
  Span step_span;
  std::vector<Stmt> body;
  std::size_t depth = 0;  // filled in by validation
};

struct IfStmt {
  std::vector<Comparison> conditions;
  std::vector<Stmt> then_body;
  std::vector<Stmt> else_body;
};

struct AccessStmt {
  AccessKind kind = AccessKind::Read;
  std::string array;
  Span array_span;
  std::vector<Expr> subscripts;
  std::size_t array_index = 0;  // filled in by validation
  std::size_t id = 0;           // filled in by validation: program-order statement number
};

struct Stmt {
  std::variant<ForStmt, IfStmt, AccessStmt> node;
  Span span;
};

struct ArrayDecl {
  std::string name;
  std::vector<Expr> extents;
  Span span;
};

struct Program {
  std::vector<std::string> params;
  std::vector<Span> param_spans;
  std::vector<ArrayDecl> arrays;
  std::vector<Stmt> body;
};

// ---------------------------------------------------------------------------
// Parser

namespace dsl_detail {

class Parser {
 public:
  explicit Parser(std::span<const Token> tokens) : tokens_(tokens) {}

  Program parse_program() {
    Program p;
    while (at_keyword("params")) {
      advance();
      do {
        const Token& t = expect_identifier("parameter name");
        p.params.push_back(t.text);
        p.param_spans.push_back(t.span);
      } while (accept(TokenKind::Delimiter, ","));
      expect(TokenKind::Delimiter, ";");
    }
    while (at_keyword("array")) {
      Span start = advance().span;
      ArrayDecl a;
      a.name = expect_identifier("array name").text;
      expect(TokenKind::Delimiter, "[");
      a.extents = parse_expr_list();
      Span end = expect(TokenKind::Delimiter, "]").span;
      expect(TokenKind::Delimiter, ";");
      a.span = join(start, end);
      p.arrays.push_back(std::move(a));
    }
    while (pos_ < tokens_.size()) p.body.push_back(parse_stmt());
    return p;
  }

 private:
  [[noreturn]] void fail(std::string_view expected) {
    Span span;
    std::string found;
    if (pos_ < tokens_.size()) {
      span = tokens_[pos_].span;
      found = "`" + tokens_[pos_].text + "`";
    } else {
      std::size_t e = tokens_.empty() ? 0 : tokens_.back().span.end;
      span = {e, e};
      found = "end of input";
    }
    throw DiagnosticError(
        {{"syntax", "syntax error: expected " + std::string(expected) + ", found " + found, span}});
  }

  bool at(TokenKind k, std::string_view text) const {
    return pos_ < tokens_.size() && tokens_[pos_].kind == k && tokens_[pos_].text == text;
  }
  bool at_keyword(std::string_view kw) const { return at(TokenKind::Keyword, kw); }

  const Token& advance() { return tokens_[pos_++]; }

  bool accept(TokenKind k, std::string_view text) {
    if (!at(k, text)) return false;
    ++pos_;
    return true;
  }

  const Token& expect(TokenKind k, std::string_view text) {
    if (!at(k, text)) fail("`" + std::string(text) + "`");
    return advance();
  }

  const Token& expect_identifier(std::string_view what) {
    if (pos_ >= tokens_.size() || tokens_[pos_].kind != TokenKind::Identifier)
      fail("identifier (" + std::string(what) + ")");
    return advance();
  }

  std::vector<Expr> parse_expr_list() {
    std::vector<Expr> out;
    out.push_back(parse_expr());
    while (accept(TokenKind::Delimiter, ",")) out.push_back(parse_expr());
    return out;
  }

  std::vector<Stmt> parse_block() {
    expect(TokenKind::Delimiter, "{");
    std::vector<Stmt> body;
    while (!at(TokenKind::Delimiter, "}")) {
      if (pos_ >= tokens_.size()) fail("`}`");
      body.push_back(parse_stmt());
    }
    advance();
    return body;
  }

  Span last_span() const { return tokens_[pos_ - 1].span; }

  Stmt parse_stmt() {
    if (pos_ >= tokens_.size()) fail("statement");
    const Token& t = tokens_[pos_];
    if (at_keyword("for")) {
      advance();
      ForStmt f;
      const Token& it = expect_identifier("loop iterator");
      f.iterator = it.text;
      f.iterator_span = it.span;
      expect(TokenKind::Keyword, "in");
      f.lower = parse_expr();
      expect(TokenKind::Operator, "..");
      f.upper = parse_expr();
      if (accept(TokenKind::Keyword, "step")) {
        if (pos_ >= tokens_.size() || tokens_[pos_].kind != TokenKind::Integer)
          fail("integer literal (loop step)");
        f.step = tokens_[pos_].value;
        f.step_span = advance().span;
      }
      f.body = parse_block();
      return {std::move(f), join(t.span, last_span())};
    }
    if (at_keyword("if")) {
      advance();
      IfStmt s;
      do {
        Comparison c;
        c.lhs = parse_expr();
        c.op = parse_cmp_op();
        c.rhs = parse_expr();
        c.span = join(c.lhs.span, c.rhs.span);
        s.conditions.push_back(std::move(c));
      } while (accept(TokenKind::Operator, "&&"));
      s.then_body = parse_block();
      if (accept(TokenKind::Keyword, "else")) s.else_body = parse_block();
      return {std::move(s), join(t.span, last_span())};
    }
    if (at_keyword("read") || at_keyword("write") || at_keyword("update")) {
      advance();
      AccessStmt a;
      a.kind = t.text == "read" ? AccessKind::Read
               : t.text == "write" ? AccessKind::Write
                                   : AccessKind::Update;
      const Token& name = expect_identifier("array name");
      a.array = name.text;
      a.array_span = name.span;
      expect(TokenKind::Delimiter, "[");
      a.subscripts = parse_expr_list();
      expect(TokenKind::Delimiter, "]");
      expect(TokenKind::Delimiter, ";");
      return {std::move(a), join(t.span, last_span())};
    }
    fail("statement (`for`, `if`, `read`, `write` or `update`)");
  }

  CmpOp parse_cmp_op() {
    if (accept(TokenKind::Operator, "<")) return CmpOp::Lt;
    if (accept(TokenKind::Operator, "<=")) return CmpOp::Le;
    if (accept(TokenKind::Operator, "==")) return CmpOp::Eq;
    if (accept(TokenKind::Operator, ">=")) return CmpOp::Ge;
    if (accept(TokenKind::Operator, ">")) return CmpOp::Gt;
    fail("comparison operator (`<`, `<=`, `==`, `>=`, `>`)");
  }

  Expr parse_expr() {
    Expr lhs = parse_mul();
    for (;;) {
      if (accept(TokenKind::Operator, "+")) {
        lhs = Expr::binary(Expr::Kind::Add, std::move(lhs), parse_mul());
      } else if (accept(TokenKind::Operator, "-")) {
        lhs = Expr::binary(Expr::Kind::Sub, std::move(lhs), parse_mul());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_mul() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept(TokenKind::Operator, "*")) {
        lhs = Expr::binary(Expr::Kind::Mul, std::move(lhs), parse_unary());
      } else if (accept(TokenKind::Operator, "/")) {
        lhs = Expr::binary(Expr::Kind::FloorDiv, std::move(lhs), parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (pos_ >= tokens_.size()) fail("expression");
    const Token& t = tokens_[pos_];
    if (accept(TokenKind::Operator, "-")) return Expr::negate(parse_unary(), t.span);
    if (accept(TokenKind::Delimiter, "(")) {
      Expr e = parse_expr();
      Span close = expect(TokenKind::Delimiter, ")").span;
      e.span = join(t.span, close);
      return e;
    }
    if (t.kind == TokenKind::Integer) {
      advance();
      return Expr::constant(t.value, t.span);
    }
    if (t.kind == TokenKind::Identifier) {
      advance();
      return Expr::var(t.text, t.span);
    }
    fail("expression (integer, identifier, `-` or `(`)");
  }

  std::span<const Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace dsl_detail

inline Program parse(std::span<const Token> tokens) {
  return dsl_detail::Parser(tokens).parse_program();
}

inline Program parse(std::string_view source) {
  auto tokens = tokenize(source);
  return parse(tokens);
}

// ---------------------------------------------------------------------------
// Pretty printing and structural comparison

namespace dsl_detail {

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub: return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::FloorDiv: return 2;
    default: return 3;
  }
}

inline void print_expr(std::ostream& os, const Expr& e) {
  auto sub = [&](const Expr& c, bool parens) {
    if (parens) os << '(';
    print_expr(os, c);
    if (parens) os << ')';
  };
  switch (e.kind) {
    case Expr::Kind::Const: os << e.value; return;
    case Expr::Kind::Var: os << e.name; return;
    case Expr::Kind::Neg:
      os << '-';
      sub(e.operands[0], precedence(e.operands[0]) < 3);
      return;
    default: {
      int p = precedence(e);
      const char* op = e.kind == Expr::Kind::Add   ? " + "
                       : e.kind == Expr::Kind::Sub ? " - "
                       : e.kind == Expr::Kind::Mul ? " * "
                                                   : " / ";
      sub(e.operands[0], precedence(e.operands[0]) < p);
      os << op;
      sub(e.operands[1], precedence(e.operands[1]) <= p);
    }
  }
}

inline void print_block(std::ostream& os, const std::vector<Stmt>& body, int indent);

inline void print_stmt(std::ostream& os, const Stmt& s, int indent) {
  std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  if (const auto* f = std::get_if<ForStmt>(&s.node)) {
    os << pad << "for " << f->iterator << " in ";
    print_expr(os, f->lower);
    os << " .. ";
    print_expr(os, f->upper);
    if (f->step != 1) os << " step " << f->step;
    os << ' ';
    print_block(os, f->body, indent);
    os << '\n';
  } else if (const auto* i = std::get_if<IfStmt>(&s.node)) {
    os << pad << "if ";
    for (std::size_t k = 0; k < i->conditions.size(); ++k) {
      if (k) os << " && ";
      print_expr(os, i->conditions[k].lhs);
      os << ' ' << to_string(i->conditions[k].op) << ' ';
      print_expr(os, i->conditions[k].rhs);
    }
    os << ' ';
    print_block(os, i->then_body, indent);
    if (!i->else_body.empty()) {
      os << " else ";
      print_block(os, i->else_body, indent);
    }
    os << '\n';
  } else {
    const auto& a = std::get<AccessStmt>(s.node);
    os << pad << to_string(a.kind) << ' ' << a.array << '[';
    for (std::size_t k = 0; k < a.subscripts.size(); ++k) {
      if (k) os << ", ";
      print_expr(os, a.subscripts[k]);
    }
    os << "];\n";
  }
}

inline void print_block(std::ostream& os, const std::vector<Stmt>& body, int indent) {
  os << "{\n";
  for (const auto& s : body) print_stmt(os, s, indent + 1);
  os << std::string(static_cast<std::size_t>(indent) * 2, ' ') << '}';
}

}  // namespace dsl_detail

inline std::string to_source(const Expr& e) {
  std::ostringstream os;
  dsl_detail::print_expr(os, e);
  return os.str();
}

/// Renders a program back to DSL text that parses to the same tree.
inline std::string to_source(const Program& p) {
  std::ostringstream os;
  if (!p.params.empty()) {
    os << "params ";
    for (std::size_t i = 0; i < p.params.size(); ++i) os << (i ? ", " : "") << p.params[i];
    os << ";\n";
  }
  for (const auto& a : p.arrays) {
    os << "array " << a.name << '[';
    for (std::size_t i = 0; i < a.extents.size(); ++i) {
      if (i) os << ", ";
      dsl_detail::print_expr(os, a.extents[i]);
    }
    os << "];\n";
  }
  if (!p.params.empty() || !p.arrays.empty()) os << '\n';
  for (const auto& s : p.body) dsl_detail::print_stmt(os, s, 0);
  return os.str();
}

inline std::string to_source(const AccessStmt& a) {
  std::ostringstream os;
  os << to_string(a.kind) << ' ' << a.array << '[';
  for (std::size_t k = 0; k < a.subscripts.size(); ++k) {
    if (k) os << ", ";
    dsl_detail::print_expr(os, a.subscripts[k]);
  }
  os << ']';
  return os.str();
}

// Structural equality ignores spans and resolution annotations.
inline bool same_structure(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.value != b.value || a.name != b.name ||
      a.operands.size() != b.operands.size())
    return false;
  for (std::size_t i = 0; i < a.operands.size(); ++i)
    if (!same_structure(a.operands[i], b.operands[i])) return false;
  return true;
}

inline bool same_structure(const std::vector<Stmt>& a, const std::vector<Stmt>& b);

inline bool same_structure(const std::vector<Expr>& a, const std::vector<Expr>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_structure(a[i], b[i])) return false;
  return true;
}

inline bool same_structure(const Stmt& a, const Stmt& b) {
  if (a.node.index() != b.node.index()) return false;
  if (const auto* f = std::get_if<ForStmt>(&a.node)) {
    const auto& g = std::get<ForStmt>(b.node);
    return f->iterator == g.iterator && f->step == g.step && same_structure(f->lower, g.lower) &&
           same_structure(f->upper, g.upper) && same_structure(f->body, g.body);
  }
  if (const auto* i = std::get_if<IfStmt>(&a.node)) {
    const auto& j = std::get<IfStmt>(b.node);
    if (i->conditions.size() != j.conditions.size()) return false;
    for (std::size_t k = 0; k < i->conditions.size(); ++k) {
      const auto& c = i->conditions[k];
      const auto& d = j.conditions[k];
      if (c.op != d.op || !same_structure(c.lhs, d.lhs) || !same_structure(c.rhs, d.rhs))
        return false;
    }
    return same_structure(i->then_body, j.then_body) && same_structure(i->else_body, j.else_body);
  }
  const auto& x = std::get<AccessStmt>(a.node);
  const auto& y = std::get<AccessStmt>(b.node);
  return x.kind == y.kind && x.array == y.array && same_structure(x.subscripts, y.subscripts);
}

inline bool same_structure(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_structure(a[i], b[i])) return false;
  return true;
}

inline bool same_structure(const Program& a, const Program& b) {
  if (a.params != b.params || a.arrays.size() != b.arrays.size()) return false;
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    if (a.arrays[i].name != b.arrays[i].name ||
        !same_structure(a.arrays[i].extents, b.arrays[i].extents))
      return false;
  }
  return same_structure(a.body, b.body);
}

// ---------------------------------------------------------------------------
// Validation

/// Per-access facts the lowering needs, in program order.
struct StatementInfo {
  std::size_t id = 0;
  AccessKind kind = AccessKind::Read;
  std::size_t array_index = 0;
  std::string array;
  std::vector<Expr> subscripts;  // resolved
  std::size_t loop_depth = 0;    // number of enclosing loops
  Span span;
  std::string text;
};

/// A program that passed every semantic check; all variables are resolved.
class ValidatedProgram {
 public:
  const Program& program() const { return program_; }
  const std::vector<StatementInfo>& statements() const { return statements_; }
  const std::vector<std::string>& params() const { return program_.params; }
  std::size_t max_loop_depth() const { return max_depth_; }
  std::size_t max_rank() const { return max_rank_; }
  /// Positive constant divisors used in floor divisions anywhere in the program.
  const std::set<std::int64_t>& divisors() const { return divisors_; }
  /// Distinct loop steps.
  const std::set<std::int64_t>& steps() const { return steps_; }

 private:
  friend ValidatedProgram validate(Program program);

  Program program_;
  std::vector<StatementInfo> statements_;
  std::size_t max_depth_ = 0;
  std::size_t max_rank_ = 0;
  std::set<std::int64_t> divisors_;
  std::set<std::int64_t> steps_;
};

namespace dsl_detail {

/// Folds an expression without variables to its value.
inline std::optional<std::int64_t> fold_constant(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Const: return e.value;
    case Expr::Kind::Var: return std::nullopt;
    case Expr::Kind::Neg: {
      auto v = fold_constant(e.operands[0]);
      if (!v) return std::nullopt;
      return -*v;
    }
    default: {
      auto l = fold_constant(e.operands[0]);
      auto r = fold_constant(e.operands[1]);
      if (!l || !r) return std::nullopt;
      switch (e.kind) {
        case Expr::Kind::Add: return *l + *r;
        case Expr::Kind::Sub: return *l - *r;
        case Expr::Kind::Mul: return *l * *r;
        case Expr::Kind::FloorDiv:
          if (*r == 0) return std::nullopt;
          return floor_div(*l, *r);
        default: return std::nullopt;
      }
    }
  }
}

class Validator {
 public:
  explicit Validator(Program& p) : p_(p) {}

  std::vector<Diagnostic> run(std::vector<StatementInfo>& statements, std::size_t& max_depth,
                              std::set<std::int64_t>& divisors, std::set<std::int64_t>& steps) {
    for (std::size_t i = 0; i < p_.params.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (p_.params[i] == p_.params[j]) {
          report("duplicate-name", "duplicate parameter '" + p_.params[i] + "'",
                 span_at(p_.param_spans, i));
          break;
        }
      }
    }
    for (std::size_t i = 0; i < p_.arrays.size(); ++i) {
      auto& a = p_.arrays[i];
      if (std::find(p_.params.begin(), p_.params.end(), a.name) != p_.params.end()) {
        report("duplicate-name", "array '" + a.name + "' has the same name as a parameter", a.span);
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (p_.arrays[j].name == a.name) {
          report("duplicate-name", "duplicate array '" + a.name + "'", a.span);
          break;
        }
      }
      for (auto& e : a.extents) check_expr(e, /*allow_iterators=*/false);
    }
    walk(p_.body);
    statements = std::move(statements_);
    max_depth = max_depth_;
    divisors = std::move(divisors_);
    steps = std::move(steps_);
    return std::move(diags_);
  }

 private:
  static Span span_at(const std::vector<Span>& spans, std::size_t i) {
    return i < spans.size() ? spans[i] : Span{};
  }

  void report(std::string category, std::string message, Span span) {
    diags_.push_back({std::move(category), std::move(message), span});
  }

  bool is_array(const std::string& name) const {
    return std::any_of(p_.arrays.begin(), p_.arrays.end(),
                       [&](const ArrayDecl& a) { return a.name == name; });
  }

  void walk(std::vector<Stmt>& body) {
    for (auto& s : body) {
      if (auto* f = std::get_if<ForStmt>(&s.node)) {
        check_expr(f->lower, true);
        check_expr(f->upper, true);
        if (f->step < 1) report("invalid-step", "non-positive loop step", f->step_span);
        steps_.insert(std::max<std::int64_t>(f->step, 1));
        bool param = std::find(p_.params.begin(), p_.params.end(), f->iterator) != p_.params.end();
        bool outer = std::find(iterators_.begin(), iterators_.end(), f->iterator) != iterators_.end();
        if (param) {
          report("shadowing", "loop variable shadowing: '" + f->iterator + "' is a parameter",
                 f->iterator_span);
        } else if (outer) {
          report("shadowing",
                 "loop variable shadowing: '" + f->iterator + "' is an enclosing loop iterator",
                 f->iterator_span);
        } else if (is_array(f->iterator)) {
          report("shadowing", "loop variable shadowing: '" + f->iterator + "' is an array",
                 f->iterator_span);
        }
        f->depth = iterators_.size();
        iterators_.push_back(f->iterator);
        max_depth_ = std::max(max_depth_, iterators_.size());
        walk(f->body);
        iterators_.pop_back();
      } else if (auto* i = std::get_if<IfStmt>(&s.node)) {
        for (auto& c : i->conditions) {
          check_expr(c.lhs, true);
          check_expr(c.rhs, true);
        }
        walk(i->then_body);
        walk(i->else_body);
      } else {
        auto& a = std::get<AccessStmt>(s.node);
        a.id = next_id_++;
        for (auto& e : a.subscripts) check_expr(e, true);
        auto it = std::find_if(p_.arrays.begin(), p_.arrays.end(),
                               [&](const ArrayDecl& d) { return d.name == a.array; });
        if (it == p_.arrays.end()) {
          report("undeclared", "undeclared array '" + a.array + "'", a.array_span);
        } else {
          a.array_index = static_cast<std::size_t>(it - p_.arrays.begin());
          if (it->extents.size() != a.subscripts.size()) {
            report("rank-mismatch",
                   "rank mismatch: expected " + std::to_string(it->extents.size()) +
                       " subscripts, found " + std::to_string(a.subscripts.size()),
                   s.span);
          }
        }
        StatementInfo info;
        info.id = a.id;
        info.kind = a.kind;
        info.array_index = a.array_index;
        info.array = a.array;
        info.subscripts = a.subscripts;
        info.loop_depth = iterators_.size();
        info.span = s.span;
        info.text = to_source(a);
        statements_.push_back(std::move(info));
      }
    }
  }

  // Resolves variables and enforces the affine restriction.
  void check_expr(Expr& e, bool allow_iterators) {
    switch (e.kind) {
      case Expr::Kind::Const: return;
      case Expr::Kind::Var: resolve(e, allow_iterators); return;
      case Expr::Kind::Neg: check_expr(e.operands[0], allow_iterators); return;
      case Expr::Kind::Add:
      case Expr::Kind::Sub:
        check_expr(e.operands[0], allow_iterators);
        check_expr(e.operands[1], allow_iterators);
        return;
      case Expr::Kind::Mul:
        check_expr(e.operands[0], allow_iterators);
        check_expr(e.operands[1], allow_iterators);
        if (!fold_constant(e.operands[0]) && !fold_constant(e.operands[1]))
          report("non-affine", "non-affine: product of two variables", e.span);
        return;
      case Expr::Kind::FloorDiv: {
        check_expr(e.operands[0], allow_iterators);
        check_expr(e.operands[1], allow_iterators);
        auto d = fold_constant(e.operands[1]);
        if (!d) {
          report("non-affine", "non-affine: division by a non-constant expression", e.span);
        } else if (*d <= 0) {
          report("invalid-divisor", "division by a non-positive constant", e.operands[1].span);
        } else {
          divisors_.insert(*d);
        }
        return;
      }
    }
  }

  void resolve(Expr& e, bool allow_iterators) {
    for (std::size_t d = iterators_.size(); d-- > 0;) {
      if (iterators_[d] == e.name) {
        if (!allow_iterators) {
          report("invalid-reference", "array extents may reference only parameters", e.span);
          return;
        }
        e.ref = {VarRef::Scope::Iterator, d};
        return;
      }
    }
    for (std::size_t i = 0; i < p_.params.size(); ++i) {
      if (p_.params[i] == e.name) {
        e.ref = {VarRef::Scope::Param, i};
        return;
      }
    }
    if (is_array(e.name)) {
      report("undeclared", "array '" + e.name + "' used as a scalar", e.span);
    } else {
      report("undeclared", "undeclared variable '" + e.name + "'", e.span);
    }
  }

  Program& p_;
  std::vector<std::string> iterators_;
  std::vector<Diagnostic> diags_;
  std::vector<StatementInfo> statements_;
  std::size_t next_id_ = 0;
  std::size_t max_depth_ = 0;
  std::set<std::int64_t> divisors_;
  std::set<std::int64_t> steps_;
};

}  // namespace dsl_detail

/// Checks a parsed program. Throws DiagnosticError listing every violation.
inline ValidatedProgram validate(Program program) {
  ValidatedProgram out;
  dsl_detail::Validator v(program);
  auto diags = v.run(out.statements_, out.max_depth_, out.divisors_, out.steps_);
  if (!diags.empty()) throw DiagnosticError(std::move(diags));
  for (const auto& a : program.arrays) out.max_rank_ = std::max(out.max_rank_, a.extents.size());
  out.program_ = std::move(program);
  return out;
}

/// tokenize + parse + validate.
inline ValidatedProgram compile(std::string_view source) { return validate(parse(source)); }

/// Evaluates a resolved expression; iterator values are indexed by loop depth.
inline std::int64_t evaluate(const Expr& e, std::span<const std::int64_t> params,
                             std::span<const std::int64_t> iterators) {
  switch (e.kind) {
    case Expr::Kind::Const: return e.value;
    case Expr::Kind::Var:
      if (e.ref.scope == VarRef::Scope::Param) return params[e.ref.index];
      if (e.ref.scope == VarRef::Scope::Iterator) return iterators[e.ref.index];
      throw std::logic_error("unresolved variable '" + e.name + "'");
    case Expr::Kind::Neg: return -evaluate(e.operands[0], params, iterators);
    case Expr::Kind::Add:
      return evaluate(e.operands[0], params, iterators) + evaluate(e.operands[1], params, iterators);
    case Expr::Kind::Sub:
      return evaluate(e.operands[0], params, iterators) - evaluate(e.operands[1], params, iterators);
    case Expr::Kind::Mul:
      return evaluate(e.operands[0], params, iterators) * evaluate(e.operands[1], params, iterators);
    case Expr::Kind::FloorDiv:
      return floor_div(evaluate(e.operands[0], params, iterators),
                       evaluate(e.operands[1], params, iterators));
  }
  return 0;
}

inline bool holds(const Comparison& c, std::span<const std::int64_t> params,
                  std::span<const std::int64_t> iterators) {
  std::int64_t l = evaluate(c.lhs, params, iterators);
  std::int64_t r = evaluate(c.rhs, params, iterators);
  switch (c.op) {
    case CmpOp::Lt: return l < r;
    case CmpOp::Le: return l <= r;
    case CmpOp::Eq: return l == r;
    case CmpOp::Ge: return l >= r;
    case CmpOp::Gt: return l > r;
  }
  return false;
}

}  // namespace dmd
