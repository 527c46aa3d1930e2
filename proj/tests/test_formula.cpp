#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "dmd/formula.hpp"
#include "formula_gen.hpp"

namespace {

using dmd::FormulaExpr;
using K = FormulaExpr::Kind;

FormulaExpr sym(const char* s) { return FormulaExpr::symbol(s); }
FormulaExpr num(std::int64_t v) { return FormulaExpr::number(v); }

TEST(Rational, LowestTermsPositiveDenominator) {
  dmd::Rational r(6, -4);
  EXPECT_EQ(r.num(), -3);
  EXPECT_EQ(r.den(), 2);
  EXPECT_EQ(dmd::Rational(0, -7).den(), 1);
  EXPECT_EQ(dmd::Rational(1, 3) + dmd::Rational(1, 6), dmd::Rational(1, 2));
  EXPECT_THROW(dmd::Rational(1, 0), std::domain_error);
}

TEST(Rational, OverflowIsReported) {
  dmd::Rational big(INT64_MAX);
  EXPECT_THROW(big * dmd::Rational(2), dmd::OverflowError);
}

TEST(Rational, FloorHelpers) {
  EXPECT_EQ(dmd::floor_div(-3, 2), -2);
  EXPECT_EQ(dmd::floor_mod(-3, 2), 1);
  EXPECT_EQ(dmd::ceil_div(5, 2), 3);
  EXPECT_EQ(dmd::ceil_div(-1, 2), 0);
}

TEST(Simplify, FlattensAndFoldsConstants) {
  auto e = dmd::simplify(FormulaExpr::add({num(1), FormulaExpr::add({num(2), sym("x")})}));
  ASSERT_EQ(e.kind(), K::Add);
  ASSERT_EQ(e.children().size(), 2u);
  EXPECT_EQ(e.child(0), sym("x"));
  EXPECT_EQ(e.child(1), num(3));
  EXPECT_EQ(dmd::render_plain(e), "x + 3");
}

TEST(Simplify, PerfectSquareExtraction) {
  EXPECT_EQ(dmd::simplify(FormulaExpr::sqrt(FormulaExpr::pow(sym("N"), 2))), sym("N"));
  auto e = dmd::simplify(FormulaExpr::sqrt(FormulaExpr::mul({num(4), FormulaExpr::pow(sym("N"), 2)})));
  EXPECT_EQ(dmd::render_plain(e), "2 * N");
  EXPECT_EQ(dmd::render_plain(dmd::simplify(FormulaExpr::sqrt(num(8)))), "2 * sqrt(2)");
}

TEST(Simplify, CollectsLikeTerms) {
  auto sq = dmd::simplify(FormulaExpr::mul({sym("x"), sym("x")}));
  ASSERT_EQ(sq.kind(), K::Pow);
  EXPECT_EQ(sq.exponent(), 2u);
  EXPECT_EQ(sq.child(), sym("x"));

  auto twice = dmd::simplify(FormulaExpr::add({sym("x"), sym("x")}));
  ASSERT_EQ(twice.kind(), K::Mul);
  EXPECT_EQ(twice.child(0), num(2));
  EXPECT_EQ(twice.child(1), sym("x"));
}

TEST(Simplify, CancellationCollapsesToIdentity) {
  auto e = dmd::simplify(FormulaExpr::add({sym("x"), FormulaExpr::mul({num(-1), sym("x")})}));
  EXPECT_EQ(e, num(0));
  EXPECT_EQ(dmd::simplify(FormulaExpr::mul({})), num(1));
  EXPECT_EQ(dmd::simplify(FormulaExpr::add({sym("y")})), sym("y"));
}

TEST(Simplify, DivisionByZeroConstantThrows) {
  EXPECT_THROW(dmd::simplify(FormulaExpr::div(sym("x"), num(0))), dmd::FormulaError);
}

TEST(Render, SqrtProductGolden) {
  auto e = FormulaExpr::mul({FormulaExpr::sqrt(FormulaExpr::add({sym("N"), sym("M")})), sym("K")});
  EXPECT_EQ(dmd::render_plain(e), "sqrt(N + M) * K");
  EXPECT_EQ(dmd::render_latex(e), "\\sqrt{N + M} \\cdot K");
}

TEST(Render, RationalAndSymbol) {
  auto r = FormulaExpr::rational(dmd::Rational(3, 2));
  EXPECT_EQ(dmd::render_plain(r), "3/2");
  EXPECT_EQ(dmd::render_latex(r), "\\frac{3}{2}");
  EXPECT_EQ(dmd::render_plain(sym("N")), "N");
  EXPECT_EQ(dmd::render_latex(sym("N")), "N");
}

TEST(Render, RawIsVerbatim) {
  auto r = FormulaExpr::raw("floor(N/2)", "\\lfloor N/2 \\rfloor");
  EXPECT_EQ(dmd::render_plain(r), "floor(N/2)");
  EXPECT_EQ(dmd::render_latex(r), "\\lfloor N/2 \\rfloor");
}

TEST(Render, ParenthesesPreserveOrder) {
  auto e = FormulaExpr::mul({FormulaExpr::add({sym("N"), num(-1)}), sym("M")});
  EXPECT_EQ(dmd::render_plain(e), "(N - 1) * M");
  auto p = FormulaExpr::pow(FormulaExpr::add({sym("a"), sym("b")}), 2);
  EXPECT_EQ(dmd::render_plain(p), "(a + b)^2");
  EXPECT_EQ(dmd::render_latex(p), "(a + b)^{2}");
}

TEST(Evaluate, Examples) {
  EXPECT_DOUBLE_EQ(dmd::evaluate(FormulaExpr::mul({num(2), sym("N")}), {{"N", 3.0}}), 6.0);
  EXPECT_DOUBLE_EQ(dmd::evaluate(FormulaExpr::sqrt(FormulaExpr::mul({num(2), sym("M")})), {{"M", 8.0}}), 4.0);
  EXPECT_THROW(dmd::evaluate(sym("Q"), {}), dmd::FormulaError);
  EXPECT_THROW(dmd::evaluate(FormulaExpr::sqrt(num(-1)), {}), dmd::FormulaError);
  EXPECT_THROW(dmd::evaluate(FormulaExpr::raw("x", "x"), {}), dmd::FormulaError);
}

TEST(FormulaProperties, RandomTreesIdempotentAndValuePreserving) {
  dmd::testing::TreeGen gen(20240611);
  std::mt19937 vals(7);
  using dmd::testing::canonical_shape;
  for (int i = 0; i < 1000; ++i) {
    FormulaExpr e = gen.any(4);
    FormulaExpr s = dmd::simplify(e);
    EXPECT_EQ(dmd::simplify(s), s) << dmd::render_plain(e);
    EXPECT_TRUE(canonical_shape(s)) << dmd::render_plain(s);
    EXPECT_EQ(dmd::render_plain(s), dmd::render_plain(dmd::simplify(e)));
    dmd::SymbolBinding b{{"N", std::uniform_int_distribution<int>(0, 12)(vals)},
                         {"M", std::uniform_int_distribution<int>(0, 12)(vals)},
                         {"K", std::uniform_int_distribution<int>(0, 12)(vals)}};
    double a = dmd::evaluate(e, b);
    double c = dmd::evaluate(s, b);
    double scale = std::max({1.0, std::abs(a), std::abs(c)});
    EXPECT_LE(std::abs(a - c), 1e-12 * scale) << dmd::render_plain(e) << "  vs  " << dmd::render_plain(s);
  }
}

}  // namespace
