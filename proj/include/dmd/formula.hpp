#pragma once

// Symbolic expressions for reuse-distance and DMD formulas: an immutable
// expression tree with a canonicalizing simplifier and plain-text / LaTeX
// renderers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dmd/rational.hpp"

namespace dmd {

class FormulaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormulaExpr {
 public:
  enum class Kind { Rational, Symbol, Raw, Add, Mul, Div, Pow, Sqrt };

  FormulaExpr() : FormulaExpr(number(0)) {}

  static FormulaExpr rational(Rational v) {
    Node n{Kind::Rational};
    n.value = v;
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr number(std::int64_t v) { return rational(Rational(v)); }
  static FormulaExpr symbol(std::string name) {
    Node n{Kind::Symbol};
    n.text = std::move(name);
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr raw(std::string plain, std::string latex) {
    Node n{Kind::Raw};
    n.text = std::move(plain);
    n.latex = std::move(latex);
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr add(std::vector<FormulaExpr> children) {
    Node n{Kind::Add};
    n.children = std::move(children);
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr mul(std::vector<FormulaExpr> children) {
    Node n{Kind::Mul};
    n.children = std::move(children);
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr div(FormulaExpr num, FormulaExpr den) {
    Node n{Kind::Div};
    n.children = {std::move(num), std::move(den)};
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr pow(FormulaExpr base, unsigned exponent) {
    Node n{Kind::Pow};
    n.children = {std::move(base)};
    n.exponent = exponent;
    return FormulaExpr(std::move(n));
  }
  static FormulaExpr sqrt(FormulaExpr child) {
    Node n{Kind::Sqrt};
    n.children = {std::move(child)};
    return FormulaExpr(std::move(n));
  }

  Kind kind() const { return node_->kind; }
  const Rational& value() const { return node_->value; }
  const std::string& name() const { return node_->text; }
  const std::string& raw_plain() const { return node_->text; }
  const std::string& raw_latex() const { return node_->latex; }
  const std::vector<FormulaExpr>& children() const { return node_->children; }
  const FormulaExpr& child(std::size_t i = 0) const { return node_->children.at(i); }
  unsigned exponent() const { return node_->exponent; }

  bool is_rational() const { return kind() == Kind::Rational; }
  bool is_zero() const { return is_rational() && value().is_zero(); }
  bool is_one() const { return is_rational() && value().is_one(); }

  friend bool operator==(const FormulaExpr& a, const FormulaExpr& b) {
    if (a.node_ == b.node_) return true;
    const Node& x = *a.node_;
    const Node& y = *b.node_;
    return x.kind == y.kind && x.value == y.value && x.text == y.text && x.latex == y.latex &&
           x.exponent == y.exponent && x.children == y.children;
  }

 private:
  struct Node {
    Kind kind;
    Rational value{};
    std::string text;
    std::string latex;
    std::vector<FormulaExpr> children;
    unsigned exponent = 0;
  };

  explicit FormulaExpr(Node n) : node_(std::make_shared<const Node>(std::move(n))) {}

  std::shared_ptr<const Node> node_;
};

namespace formula_detail {

inline int kind_rank(FormulaExpr::Kind k) {
  switch (k) {
    case FormulaExpr::Kind::Rational: return 0;
    case FormulaExpr::Kind::Symbol: return 1;
    case FormulaExpr::Kind::Raw: return 2;
    case FormulaExpr::Kind::Pow: return 3;
    case FormulaExpr::Kind::Mul: return 4;
    case FormulaExpr::Kind::Div: return 5;
    case FormulaExpr::Kind::Sqrt: return 6;
    case FormulaExpr::Kind::Add: return 7;
  }
  return 8;
}

/// Total order on expression trees; drives canonical term order.
inline int compare(const FormulaExpr& a, const FormulaExpr& b) {
  int ra = kind_rank(a.kind()), rb = kind_rank(b.kind());
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a.kind()) {
    case FormulaExpr::Kind::Rational:
      if (a.value() == b.value()) return 0;
      return a.value() < b.value() ? -1 : 1;
    case FormulaExpr::Kind::Symbol:
      return a.name().compare(b.name()) < 0 ? -1 : (a.name() == b.name() ? 0 : 1);
    case FormulaExpr::Kind::Raw:
      if (a.raw_plain() != b.raw_plain()) return a.raw_plain() < b.raw_plain() ? -1 : 1;
      if (a.raw_latex() != b.raw_latex()) return a.raw_latex() < b.raw_latex() ? -1 : 1;
      return 0;
    case FormulaExpr::Kind::Pow: {
      int c = compare(a.child(), b.child());
      if (c != 0) return c;
      if (a.exponent() != b.exponent()) return a.exponent() < b.exponent() ? -1 : 1;
      return 0;
    }
    default: {
      const auto& x = a.children();
      const auto& y = b.children();
      for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
        int c = compare(x[i], y[i]);
        if (c != 0) return c;
      }
      if (x.size() != y.size()) return x.size() < y.size() ? -1 : 1;
      return 0;
    }
  }
}

struct Less {
  bool operator()(const FormulaExpr& a, const FormulaExpr& b) const { return compare(a, b) < 0; }
};

/// Splits a canonical term into its rational coefficient and the remaining
/// coefficient-free product (1 when the term is a constant).
inline std::pair<Rational, FormulaExpr> split_coeff(const FormulaExpr& e) {
  if (e.is_rational()) return {e.value(), FormulaExpr::number(1)};
  if (e.kind() == FormulaExpr::Kind::Mul && !e.children().empty() && e.child(0).is_rational()) {
    std::vector<FormulaExpr> rest(e.children().begin() + 1, e.children().end());
    if (rest.size() == 1) return {e.child(0).value(), rest.front()};
    return {e.child(0).value(), FormulaExpr::mul(std::move(rest))};
  }
  return {Rational(1), e};
}

inline std::pair<FormulaExpr, unsigned> split_power(const FormulaExpr& e) {
  if (e.kind() == FormulaExpr::Kind::Pow) return {e.child(), e.exponent()};
  return {e, 1u};
}

inline unsigned term_degree(const FormulaExpr& e) {
  switch (e.kind()) {
    case FormulaExpr::Kind::Rational: return 0;
    case FormulaExpr::Kind::Pow: return term_degree(e.child()) * e.exponent();
    case FormulaExpr::Kind::Mul: {
      unsigned d = 0;
      for (const auto& c : e.children()) d += term_degree(c);
      return d;
    }
    default: return 1;
  }
}

// Square-free decomposition of a positive integer: n = root^2 * rest.
inline std::pair<std::int64_t, std::int64_t> square_part(std::int64_t n) {
  std::int64_t root = 1, rest = 1;
  for (std::int64_t p = 2; p <= 1000000 && p * p <= n; ++p) {
    int k = 0;
    while (n % p == 0) {
      n /= p;
      ++k;
    }
    for (int i = 0; i < k / 2; ++i) root *= p;
    if (k % 2) rest *= p;
  }
  auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (n > 1 && r * r == n) {
    root *= r;
  } else {
    rest *= n;
  }
  return {root, rest};
}

inline bool non_negative_base(const FormulaExpr& e) {
  return e.kind() == FormulaExpr::Kind::Symbol || e.kind() == FormulaExpr::Kind::Sqrt;
}

inline FormulaExpr make_mul(std::vector<FormulaExpr> children);
inline FormulaExpr make_pow(const FormulaExpr& base, unsigned e);

inline FormulaExpr make_add(std::vector<FormulaExpr> children) {
  std::vector<FormulaExpr> flat;
  for (auto& c : children) {
    if (c.kind() == FormulaExpr::Kind::Add) {
      flat.insert(flat.end(), c.children().begin(), c.children().end());
    } else {
      flat.push_back(std::move(c));
    }
  }
  Rational constant(0);
  std::map<FormulaExpr, Rational, Less> terms;
  for (const auto& c : flat) {
    auto [coeff, rest] = split_coeff(c);
    if (rest.is_one()) {
      constant += coeff;
    } else {
      terms[rest] += coeff;
    }
  }
  std::vector<FormulaExpr> out;
  for (const auto& [rest, coeff] : terms) {
    if (coeff.is_zero()) continue;
    out.push_back(make_mul({FormulaExpr::rational(coeff), rest}));
  }
  std::stable_sort(out.begin(), out.end(), [](const FormulaExpr& a, const FormulaExpr& b) {
    unsigned da = term_degree(split_coeff(a).second), db = term_degree(split_coeff(b).second);
    if (da != db) return da > db;
    return compare(split_coeff(a).second, split_coeff(b).second) < 0;
  });
  if (!constant.is_zero()) out.push_back(FormulaExpr::rational(constant));
  if (out.empty()) return FormulaExpr::number(0);
  if (out.size() == 1) return out.front();
  return FormulaExpr::add(std::move(out));
}

inline FormulaExpr make_mul(std::vector<FormulaExpr> children) {
  Rational coeff(1);
  std::map<FormulaExpr, unsigned, Less> powers;
  std::vector<FormulaExpr> pending = std::move(children);
  while (!pending.empty()) {
    std::vector<FormulaExpr> next;
    for (auto& c : pending) {
      if (c.kind() == FormulaExpr::Kind::Mul) {
        next.insert(next.end(), c.children().begin(), c.children().end());
      } else if (c.is_rational()) {
        coeff *= c.value();
      } else {
        auto [base, e] = split_power(c);
        powers[base] += e;
      }
    }
    // sqrt(x)^2 == x for the non-negative x a square root admits
    for (auto it = powers.begin(); it != powers.end();) {
      if (it->first.kind() == FormulaExpr::Kind::Sqrt && it->second >= 2) {
        next.push_back(make_pow(it->first.child(), it->second / 2));
        if (it->second % 2 == 0) {
          it = powers.erase(it);
          continue;
        }
        it->second = 1;
      }
      ++it;
    }
    pending = std::move(next);
  }
  if (coeff.is_zero()) return FormulaExpr::number(0);
  std::vector<FormulaExpr> out;
  if (!coeff.is_one()) out.push_back(FormulaExpr::rational(coeff));
  for (const auto& [base, e] : powers) {
    if (e == 0) continue;
    out.push_back(e == 1 ? base : FormulaExpr::pow(base, e));
  }
  if (out.empty()) return FormulaExpr::rational(coeff);
  if (out.size() == 1) return out.front();
  return FormulaExpr::mul(std::move(out));
}

inline FormulaExpr make_pow(const FormulaExpr& base, unsigned e) {
  if (e == 0) return FormulaExpr::number(1);
  if (e == 1) return base;
  switch (base.kind()) {
    case FormulaExpr::Kind::Rational: return FormulaExpr::rational(base.value().pow(e));
    case FormulaExpr::Kind::Pow: return make_pow(base.child(), base.exponent() * e);
    case FormulaExpr::Kind::Mul: {
      std::vector<FormulaExpr> parts;
      for (const auto& c : base.children()) parts.push_back(make_pow(c, e));
      return make_mul(std::move(parts));
    }
    case FormulaExpr::Kind::Sqrt:
      return make_mul({make_pow(base.child(), e / 2),
                       e % 2 ? base : FormulaExpr::number(1)});
    default: return FormulaExpr::pow(base, e);
  }
}

inline FormulaExpr make_div(const FormulaExpr& num, const FormulaExpr& den) {
  if (den.is_rational()) {
    if (den.is_zero()) throw FormulaError("division by zero");
    return make_mul({FormulaExpr::rational(Rational(1) / den.value()), num});
  }
  if (num.is_zero()) return num;
  return FormulaExpr::div(num, den);
}

inline FormulaExpr make_sqrt(const FormulaExpr& x) {
  if (x.is_zero()) return x;
  auto [coeff, rest] = split_coeff(x);
  if (coeff.is_negative() || x.kind() == FormulaExpr::Kind::Add) return FormulaExpr::sqrt(x);
  // sqrt(n/d) == sqrt(n*d)/d; then pull the square part of n*d outside.
  auto [root, free] = square_part(detail::narrow_checked(static_cast<__int128>(coeff.num()) * coeff.den()));
  std::vector<FormulaExpr> outside{FormulaExpr::rational(Rational(root, coeff.den()))};
  std::vector<FormulaExpr> inside{FormulaExpr::number(free)};
  std::vector<FormulaExpr> factors;
  if (rest.kind() == FormulaExpr::Kind::Mul) {
    factors = rest.children();
  } else if (!rest.is_one()) {
    factors.push_back(rest);
  }
  for (const auto& f : factors) {
    auto [base, e] = split_power(f);
    if (non_negative_base(base)) {
      outside.push_back(make_pow(base, e / 2));
      inside.push_back(make_pow(base, e % 2));
    } else {
      inside.push_back(f);
    }
  }
  FormulaExpr in = make_mul(std::move(inside));
  if (!in.is_one()) outside.push_back(FormulaExpr::sqrt(in));
  return make_mul(std::move(outside));
}

}  // namespace formula_detail

/// Canonicalizes an expression: flattens nested sums and products, collects
/// like terms and powers, folds constants, and pulls perfect-square factors
/// out of square roots. Symbols are taken to be non-negative (they stand for
/// DSL parameters, which are sizes).
inline FormulaExpr simplify(const FormulaExpr& e) {
  using K = FormulaExpr::Kind;
  namespace fd = formula_detail;
  switch (e.kind()) {
    case K::Rational:
    case K::Symbol:
    case K::Raw: return e;
    case K::Add: {
      std::vector<FormulaExpr> cs;
      for (const auto& c : e.children()) cs.push_back(simplify(c));
      return fd::make_add(std::move(cs));
    }
    case K::Mul: {
      std::vector<FormulaExpr> cs;
      for (const auto& c : e.children()) cs.push_back(simplify(c));
      return fd::make_mul(std::move(cs));
    }
    case K::Div: return fd::make_div(simplify(e.child(0)), simplify(e.child(1)));
    case K::Pow: return fd::make_pow(simplify(e.child()), e.exponent());
    case K::Sqrt: return fd::make_sqrt(simplify(e.child()));
  }
  return e;
}

// Convenience builders that simplify as they go.
inline FormulaExpr operator+(const FormulaExpr& a, const FormulaExpr& b) {
  return formula_detail::make_add({a, b});
}
inline FormulaExpr operator*(const FormulaExpr& a, const FormulaExpr& b) {
  return formula_detail::make_mul({a, b});
}
inline FormulaExpr operator-(const FormulaExpr& a, const FormulaExpr& b) {
  return formula_detail::make_add({a, formula_detail::make_mul({FormulaExpr::number(-1), b})});
}

namespace formula_detail {

// Rendering precedence: 1 additive / unary minus, 2 multiplicative,
// 4 power, 5 atom.
inline int precedence(const FormulaExpr& e, bool latex) {
  using K = FormulaExpr::Kind;
  switch (e.kind()) {
    case K::Rational:
      if (e.value().is_negative()) return 1;
      return e.value().is_integer() || latex ? 5 : 2;
    case K::Symbol:
    case K::Raw:
    case K::Sqrt: return 5;
    case K::Pow: return 4;
    case K::Div: return latex ? 5 : 2;
    case K::Mul:
      if (!e.children().empty() && precedence(e.child(0), latex) == 1) return 1;
      return 2;
    case K::Add: return 1;
  }
  return 5;
}

inline bool is_negative_term(const FormulaExpr& e) {
  if (e.is_rational()) return e.value().is_negative();
  return e.kind() == FormulaExpr::Kind::Mul && !e.children().empty() && e.child(0).is_rational() &&
         e.child(0).value().is_negative();
}

inline FormulaExpr negate_term(const FormulaExpr& e) {
  if (e.is_rational()) return FormulaExpr::rational(-e.value());
  std::vector<FormulaExpr> cs = e.children();
  Rational c = -cs.front().value();
  if (c.is_one() && cs.size() > 1) {
    cs.erase(cs.begin());
    if (cs.size() == 1) return cs.front();
  } else {
    cs.front() = FormulaExpr::rational(c);
  }
  return FormulaExpr::mul(std::move(cs));
}

inline std::string render(const FormulaExpr& e, bool latex);

inline std::string wrap(const FormulaExpr& e, bool latex, bool parens) {
  std::string s = render(e, latex);
  return parens ? "(" + s + ")" : s;
}

inline std::string render(const FormulaExpr& e, bool latex) {
  using K = FormulaExpr::Kind;
  switch (e.kind()) {
    case K::Rational: {
      const Rational& v = e.value();
      if (v.is_integer()) return std::to_string(v.num());
      if (!latex) return v.str();
      std::string frac = "\\frac{" + std::to_string(v.num() < 0 ? -v.num() : v.num()) + "}{" +
                         std::to_string(v.den()) + "}";
      return v.is_negative() ? "-" + frac : frac;
    }
    case K::Symbol: return e.name();
    case K::Raw: return latex ? e.raw_latex() : e.raw_plain();
    case K::Add: {
      std::string out;
      for (std::size_t i = 0; i < e.children().size(); ++i) {
        const auto& c = e.child(i);
        if (i == 0) {
          out += wrap(c, latex, c.kind() == K::Add);
        } else if (is_negative_term(c)) {
          FormulaExpr pos = negate_term(c);
          out += " - " + wrap(pos, latex, precedence(pos, latex) <= 1);
        } else {
          out += " + " + wrap(c, latex, precedence(c, latex) <= 1);
        }
      }
      return out;
    }
    case K::Mul: {
      const auto& cs = e.children();
      std::string out;
      std::size_t start = 0;
      if (cs.size() > 1 && cs.front().is_rational() && cs.front().value() == Rational(-1)) {
        out = "-";
        start = 1;
      }
      const char* sep = latex ? " \\cdot " : " * ";
      for (std::size_t i = start; i < cs.size(); ++i) {
        if (i > start) out += sep;
        bool parens = i == 0 ? cs[i].kind() == K::Add : precedence(cs[i], latex) <= 1;
        out += wrap(cs[i], latex, parens);
      }
      return out;
    }
    case K::Div:
      if (latex) return "\\frac{" + render(e.child(0), true) + "}{" + render(e.child(1), true) + "}";
      return wrap(e.child(0), false, precedence(e.child(0), false) <= 1) + " / " +
             wrap(e.child(1), false, precedence(e.child(1), false) <= 2);
    case K::Pow: {
      bool parens = precedence(e.child(), latex) <= 4 ||
                    (e.child().is_rational() && !e.child().value().is_integer());
      std::string base = wrap(e.child(), latex, parens);
      if (latex) return base + "^{" + std::to_string(e.exponent()) + "}";
      return base + "^" + std::to_string(e.exponent());
    }
    case K::Sqrt:
      if (latex) return "\\sqrt{" + render(e.child(), true) + "}";
      return "sqrt(" + render(e.child(), false) + ")";
  }
  return {};
}

}  // namespace formula_detail

/// Plain-text rendering: `sqrt(...)`, `*`, `/`, `^`.
inline std::string render_plain(const FormulaExpr& e) { return formula_detail::render(e, false); }

/// LaTeX rendering: `\sqrt{}`, `\cdot`, `\frac{}{}`, superscripts.
inline std::string render_latex(const FormulaExpr& e) { return formula_detail::render(e, true); }

using SymbolBinding = std::map<std::string, double, std::less<>>;

inline double evaluate(const FormulaExpr& e, const SymbolBinding& binding) {
  using K = FormulaExpr::Kind;
  switch (e.kind()) {
    case K::Rational: return e.value().to_double();
    case K::Symbol: {
      auto it = binding.find(e.name());
      if (it == binding.end()) throw FormulaError("unbound symbol '" + e.name() + "'");
      return it->second;
    }
    case K::Raw: throw FormulaError("raw expression '" + e.raw_plain() + "' has no numeric value");
    case K::Add: {
      double s = 0;
      for (const auto& c : e.children()) s += evaluate(c, binding);
      return s;
    }
    case K::Mul: {
      double p = 1;
      for (const auto& c : e.children()) p *= evaluate(c, binding);
      return p;
    }
    case K::Div: {
      double d = evaluate(e.child(1), binding);
      if (d == 0) throw FormulaError("division by zero");
      return evaluate(e.child(0), binding) / d;
    }
    case K::Pow: return std::pow(evaluate(e.child(), binding), static_cast<double>(e.exponent()));
    case K::Sqrt: {
      double v = evaluate(e.child(), binding);
      if (v < 0) throw FormulaError("square root of negative value");
      return std::sqrt(v);
    }
  }
  return 0;
}

}  // namespace dmd
