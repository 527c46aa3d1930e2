#pragma once

// Multivariate polynomials and quasi-polynomials with exact rational
// coefficients, and interpolation of quasi-polynomials from integer samples.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmd/formula.hpp"
#include "dmd/rational.hpp"

namespace dmd {

using Monomial = std::vector<unsigned>;  // exponent per variable

class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::size_t nvars) : nvars_(nvars) {}

  static Polynomial constant(std::size_t nvars, const Rational& c) {
    Polynomial p(nvars);
    p.set(Monomial(nvars, 0), c);
    return p;
  }

  std::size_t nvars() const { return nvars_; }
  const std::map<Monomial, Rational>& terms() const { return terms_; }

  void set(const Monomial& m, const Rational& c) {
    if (c.is_zero())
      terms_.erase(m);
    else
      terms_[m] = c;
  }

  Rational coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? Rational(0) : it->second;
  }

  Rational operator()(std::span<const std::int64_t> x) const {
    Rational s(0);
    for (const auto& [m, c] : terms_) {
      Rational t = c;
      for (std::size_t k = 0; k < nvars_; ++k) t *= Rational(x[k]).pow(m[k]);
      s += t;
    }
    return s;
  }

  bool is_constant() const {
    return std::all_of(terms_.begin(), terms_.end(), [](const auto& kv) {
      return std::all_of(kv.first.begin(), kv.first.end(), [](unsigned e) { return e == 0; });
    });
  }

  unsigned degree() const {
    unsigned d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, std::accumulate(m.begin(), m.end(), 0u));
    return d;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) {
    for (const auto& [m, c] : b.terms_) a.set(m, a.coefficient(m) + c);
    return a;
  }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) {
    for (const auto& [m, c] : b.terms_) a.set(m, a.coefficient(m) - c);
    return a;
  }
  friend bool operator==(const Polynomial&, const Polynomial&) = default;

  FormulaExpr to_formula(const std::vector<std::string>& names) const {
    std::vector<FormulaExpr> sum;
    for (const auto& [m, c] : terms_) {
      std::vector<FormulaExpr> prod{FormulaExpr::rational(c)};
      for (std::size_t k = 0; k < nvars_; ++k)
        if (m[k] > 0) prod.push_back(FormulaExpr::pow(FormulaExpr::symbol(names.at(k)), m[k]));
      sum.push_back(FormulaExpr::mul(std::move(prod)));
    }
    if (sum.empty()) return FormulaExpr::number(0);
    return simplify(FormulaExpr::add(std::move(sum)));
  }

 private:
  std::size_t nvars_ = 0;
  std::map<Monomial, Rational> terms_;
};

/// Polynomial per residue class of the variables modulo a common period.
/// Residue classes without a piece are undefined.
class QuasiPoly {
 public:
  using Residue = std::vector<std::int64_t>;

  QuasiPoly() = default;
  QuasiPoly(std::size_t nvars, std::int64_t period) : nvars_(nvars), period_(period) {}

  static QuasiPoly polynomial(const Polynomial& p) {
    QuasiPoly q(p.nvars(), 1);
    q.pieces_[Residue(p.nvars(), 0)] = p;
    return q;
  }

  std::size_t nvars() const { return nvars_; }
  std::int64_t period() const { return period_; }
  const std::map<Residue, Polynomial>& pieces() const { return pieces_; }
  void set_piece(const Residue& r, Polynomial p) { pieces_[r] = std::move(p); }

  Residue residue_of(std::span<const std::int64_t> x) const {
    Residue r(nvars_);
    for (std::size_t k = 0; k < nvars_; ++k) r[k] = floor_mod(x[k], period_);
    return r;
  }

  bool defined_at(std::span<const std::int64_t> x) const { return pieces_.count(residue_of(x)) > 0; }

  Rational operator()(std::span<const std::int64_t> x) const {
    auto it = pieces_.find(residue_of(x));
    if (it == pieces_.end()) throw std::domain_error("quasi-polynomial undefined at this residue");
    return it->second(x);
  }

  std::size_t residue_count() const {
    std::size_t n = 1;
    for (std::size_t k = 0; k < nvars_; ++k) n *= static_cast<std::size_t>(period_);
    return n;
  }

  bool complete() const { return pieces_.size() == residue_count(); }

  /// True when some piece depends on some variable.
  bool grows() const {
    return std::any_of(pieces_.begin(), pieces_.end(), [](const auto& kv) { return !kv.second.is_constant(); });
  }

  bool is_polynomial() const { return period_ == 1 && pieces_.size() == 1; }

  /// Re-expresses the quasi-polynomial over a multiple of its period.
  QuasiPoly lift(std::int64_t period) const {
    if (period % period_ != 0) throw std::invalid_argument("period must be a multiple");
    QuasiPoly q(nvars_, period);
    Residue r(nvars_, 0);
    for (std::size_t i = 0; i < q.residue_count(); ++i) {
      auto it = pieces_.find(residue_of(r));
      if (it != pieces_.end()) q.pieces_[r] = it->second;
      for (std::size_t k = 0; k < nvars_; ++k) {
        if (++r[k] < period) break;
        r[k] = 0;
      }
    }
    return q;
  }

  /// Drops the period when every residue class carries the same polynomial.
  QuasiPoly collapsed() const {
    if (period_ == 1 || !complete()) return *this;
    const Polynomial& first = pieces_.begin()->second;
    for (const auto& [r, p] : pieces_)
      if (!(p == first)) return *this;
    return polynomial(first);
  }

  friend QuasiPoly combine(const QuasiPoly& a, const QuasiPoly& b, bool subtract) {
    std::int64_t p = std::lcm(a.period_, b.period_);
    QuasiPoly x = a.lift(p), y = b.lift(p), out(a.nvars_, p);
    for (const auto& [r, pa] : x.pieces_) {
      auto it = y.pieces_.find(r);
      if (it == y.pieces_.end()) continue;
      out.pieces_[r] = subtract ? pa - it->second : pa + it->second;
    }
    return out.collapsed();
  }
  friend QuasiPoly operator+(const QuasiPoly& a, const QuasiPoly& b) { return combine(a, b, false); }
  friend QuasiPoly operator-(const QuasiPoly& a, const QuasiPoly& b) { return combine(a, b, true); }
  friend bool operator==(const QuasiPoly&, const QuasiPoly&) = default;

  FormulaExpr to_formula(const std::vector<std::string>& names) const {
    if (is_polynomial()) return pieces_.begin()->second.to_formula(names);
    std::string plain = "{ ", latex = "\\begin{cases} ";
    bool first = true;
    for (const auto& [r, p] : pieces_) {
      FormulaExpr f = p.to_formula(names);
      std::string cond_plain, cond_latex;
      for (std::size_t k = 0; k < nvars_; ++k) {
        cond_plain += (k ? ", " : "") + names[k] + " mod " + std::to_string(period_) + " = " +
                      std::to_string(r[k]);
        cond_latex += (k ? ",\\ " : "") + names[k] + " \\equiv " + std::to_string(r[k]) +
                      " \\pmod{" + std::to_string(period_) + "}";
      }
      plain += (first ? "" : "; ") + render_plain(f) + " if " + cond_plain;
      latex += (first ? "" : " \\\\ ") + render_latex(f) + " & " + cond_latex;
      first = false;
    }
    return FormulaExpr::raw(plain + " }", latex + " \\end{cases}");
  }

 private:
  std::size_t nvars_ = 0;
  std::int64_t period_ = 1;
  std::map<Residue, Polynomial> pieces_;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Sample {
  std::vector<std::int64_t> point;
  Rational value;
};

namespace qp_detail {

/// Inverse of the Vandermonde matrix V[a][e] = x_a^e by Gauss-Jordan.
inline std::vector<std::vector<Rational>> vandermonde_inverse(const std::vector<std::int64_t>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::vector<Rational>> a(n, std::vector<Rational>(2 * n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < n; ++e) a[i][e] = Rational(xs[i]).pow(static_cast<unsigned>(e));
    a[i][n + i] = Rational(1);
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    while (piv < n && a[piv][c].is_zero()) ++piv;
    if (piv == n) throw FitFailure("singular interpolation system");
    std::swap(a[c], a[piv]);
    Rational inv = Rational(1) / a[c][c];
    for (auto& v : a[c]) v *= inv;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c].is_zero()) continue;
      Rational f = a[r][c];
      for (std::size_t k = 0; k < 2 * n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<std::vector<Rational>> out(n, std::vector<Rational>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i][j] = a[i][n + j];
  return out;
}

/// Tensor-product interpolation on the grid nodes[0] x ... x nodes[n-1].
inline Polynomial interpolate(const std::vector<std::vector<std::int64_t>>& nodes,
                              const std::map<std::vector<std::int64_t>, Rational>& values) {
  const std::size_t n = nodes.size();
  std::vector<std::size_t> extent(n), stride(n);
  std::size_t total = 1;
  for (std::size_t k = n; k-- > 0;) {
    extent[k] = nodes[k].size();
    stride[k] = total;
    total *= extent[k];
  }
  std::vector<Rational> tensor(total);
  std::vector<std::int64_t> x(n);
  for (std::size_t flat = 0; flat < total; ++flat) {
    for (std::size_t k = 0; k < n; ++k) x[k] = nodes[k][(flat / stride[k]) % extent[k]];
    auto it = values.find(x);
    if (it == values.end()) throw FitFailure("incomplete sample grid");
    tensor[flat] = it->second;
  }
  for (std::size_t k = 0; k < n; ++k) {
    auto inv = vandermonde_inverse(nodes[k]);
    std::vector<Rational> fiber(extent[k]), out(extent[k]);
    for (std::size_t flat = 0; flat < total; ++flat) {
      if ((flat / stride[k]) % extent[k] != 0) continue;  // fiber start
      for (std::size_t a = 0; a < extent[k]; ++a) fiber[a] = tensor[flat + a * stride[k]];
      for (std::size_t e = 0; e < extent[k]; ++e) {
        Rational s(0);
        for (std::size_t a = 0; a < extent[k]; ++a) s += inv[e][a] * fiber[a];
        out[e] = s;
      }
      for (std::size_t e = 0; e < extent[k]; ++e) tensor[flat + e * stride[k]] = out[e];
    }
  }
  Polynomial p(n);
  Monomial m(n);
  for (std::size_t flat = 0; flat < total; ++flat) {
    for (std::size_t k = 0; k < n; ++k) m[k] = static_cast<unsigned>((flat / stride[k]) % extent[k]);
    p.set(m, tensor[flat]);
  }
  return p;
}

}  // namespace qp_detail

/// Interpolates one polynomial per residue class from `fit_samples` and
/// checks it against every sample (fit and `check_samples` alike). Per
/// residue class and axis the degree+1 smallest distinct coordinates are the
/// interpolation nodes; the full tensor grid of nodes must be sampled.
inline QuasiPoly fit(const std::vector<Sample>& fit_samples, const std::vector<Sample>& check_samples,
                     unsigned degree, std::int64_t period) {
  if (period < 1) throw std::invalid_argument("period must be positive");
  if (fit_samples.empty()) throw FitFailure("no samples");
  const std::size_t n = fit_samples.front().point.size();
  QuasiPoly q(n, period);
  std::map<QuasiPoly::Residue, std::map<std::vector<std::int64_t>, Rational>> by_residue;
  for (const auto& s : fit_samples) {
    auto r = q.residue_of(s.point);
    auto [it, fresh] = by_residue[r].emplace(s.point, s.value);
    if (!fresh && !(it->second == s.value)) throw FitFailure("conflicting samples");
  }
  try {
    for (const auto& [r, values] : by_residue) {
      std::vector<std::vector<std::int64_t>> nodes(n);
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::int64_t> xs;
        for (const auto& [pt, v] : values) xs.push_back(pt[k]);
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        if (xs.size() < degree + 1) throw FitFailure("too few distinct sample coordinates");
        xs.resize(degree + 1);
        nodes[k] = std::move(xs);
      }
      q.set_piece(r, qp_detail::interpolate(nodes, values));
    }
    for (const auto* list : {&fit_samples, &check_samples})
      for (const auto& s : *list) {
        if (!q.defined_at(s.point)) continue;
        if (!(q(s.point) == s.value)) throw FitFailure("validation sample mismatch");
      }
  } catch (const OverflowError&) {
    throw FitFailure("arithmetic overflow during interpolation");
  }
  return q.collapsed();
}

/// Splits samples into interpolation nodes and held-out checks automatically.
inline QuasiPoly fit(const std::vector<Sample>& samples, unsigned degree, std::int64_t period) {
  return fit(samples, {}, degree, period);
}

}  // namespace dmd
