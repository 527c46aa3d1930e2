#include <gtest/gtest.h>

#include <functional>

#include "dmd/quasi_poly.hpp"

namespace {

using dmd::Rational;
using dmd::Sample;
using Point = std::vector<std::int64_t>;

std::vector<Sample> grid2(std::int64_t lo, std::int64_t hi, const std::function<std::int64_t(Point)>& f) {
  std::vector<Sample> out;
  for (std::int64_t a = lo; a <= hi; ++a)
    for (std::int64_t b = lo; b <= hi; ++b) out.push_back({{a, b}, Rational(f({a, b}))});
  return out;
}

TEST(Polynomial, EvaluateAndDegree) {
  dmd::Polynomial p(2);
  p.set({1, 1}, Rational(1));
  p.set({0, 1}, Rational(-1));
  EXPECT_EQ(p(Point{4, 3}), Rational(9));
  EXPECT_EQ(p.degree(), 2u);
  EXPECT_FALSE(p.is_constant());
  EXPECT_EQ(dmd::render_plain(dmd::simplify(p.to_formula({"N", "M"}))), dmd::render_plain(dmd::simplify(
      dmd::FormulaExpr::add({dmd::FormulaExpr::mul({dmd::FormulaExpr::symbol("N"), dmd::FormulaExpr::symbol("M")}),
                             dmd::FormulaExpr::mul({dmd::FormulaExpr::number(-1), dmd::FormulaExpr::symbol("M")})}))));
}

TEST(Fit, Constant) {
  std::vector<Sample> s;
  for (std::int64_t n = 2; n <= 5; ++n) s.push_back({{n}, Rational(7)});
  auto q = dmd::fit(s, 2, 1);
  EXPECT_FALSE(q.grows());
  EXPECT_EQ(q(Point{1000}), Rational(7));
}

TEST(Fit, BilinearProduct) {
  auto f = [](Point x) { return (x[0] - 1) * x[1]; };
  auto q = dmd::fit(grid2(3, 6, f), 2, 1);
  EXPECT_TRUE(q.is_polynomial());
  EXPECT_EQ(q(Point{9, 9}), Rational(72));
  EXPECT_EQ(q(Point{40, 3}), Rational(117));
}

TEST(Fit, FloorHalfNeedsPeriodTwo) {
  std::vector<Sample> s;
  for (std::int64_t n = 4; n <= 11; ++n) s.push_back({{n}, Rational(n / 2)});
  EXPECT_THROW(dmd::fit(s, 1, 1), dmd::FitFailure);
  auto q = dmd::fit(s, 1, 2);
  EXPECT_EQ(q.period(), 2);
  EXPECT_TRUE(q.complete());
  EXPECT_EQ(q(Point{10}), Rational(5));
  EXPECT_EQ(q(Point{11}), Rational(5));
  EXPECT_EQ(q(Point{101}), Rational(50));
  auto text = dmd::render_plain(q.to_formula({"N"}));
  EXPECT_NE(text.find("N mod 2 = 0"), std::string::npos) << text;
  EXPECT_NE(text.find("N mod 2 = 1"), std::string::npos) << text;
}

TEST(Fit, ValidationSampleRejectsWrongModel) {
  std::vector<Sample> fit_s, check;
  for (std::int64_t n = 2; n <= 4; ++n) fit_s.push_back({{n}, Rational(n * n)});
  check.push_back({{10}, Rational(101)});
  EXPECT_THROW(dmd::fit(fit_s, check, 2, 1), dmd::FitFailure);
  check.back().value = Rational(100);
  EXPECT_EQ(dmd::fit(fit_s, check, 2, 1)(Point{7}), Rational(49));
}

TEST(Fit, MissingGridPointFails) {
  auto s = grid2(3, 5, [](Point x) { return x[0] + x[1]; });
  s.erase(s.begin() + 4);
  EXPECT_THROW(dmd::fit(s, 2, 1), dmd::FitFailure);
}

TEST(Fit, OverflowBecomesFitFailure) {
  std::vector<Sample> s;
  for (std::int64_t n = 0; n <= 3; ++n)
    s.push_back({{n * 1'000'000'000LL}, Rational(n % 2 ? INT64_MAX / 2 : -INT64_MAX / 2)});
  EXPECT_THROW(dmd::fit(s, 3, 1), dmd::FitFailure);
}

TEST(QuasiPoly, LiftAndCollapse) {
  auto p = dmd::Polynomial::constant(1, Rational(3));
  auto q = dmd::QuasiPoly::polynomial(p);
  auto l = q.lift(4);
  EXPECT_EQ(l.period(), 4);
  EXPECT_EQ(l.pieces().size(), 4u);
  EXPECT_EQ(l.collapsed(), q);
  EXPECT_THROW(l.lift(6), std::invalid_argument);
}

TEST(QuasiPoly, SumAcrossPeriods) {
  dmd::QuasiPoly a(1, 2);
  a.set_piece({0}, dmd::Polynomial::constant(1, Rational(1)));
  a.set_piece({1}, dmd::Polynomial::constant(1, Rational(2)));
  dmd::QuasiPoly b(1, 3);
  for (std::int64_t r = 0; r < 3; ++r) b.set_piece({r}, dmd::Polynomial::constant(1, Rational(10 * r)));
  auto c = a + b;
  EXPECT_EQ(c.period(), 6);
  for (std::int64_t n = 0; n < 12; ++n) EXPECT_EQ(c(Point{n}), Rational((n % 2) + 1 + 10 * (n % 3)));
  auto d = c - b;
  for (std::int64_t n = 0; n < 12; ++n) EXPECT_EQ(d(Point{n}), a(Point{n}));
}

TEST(QuasiPoly, UndefinedResidueThrows) {
  dmd::QuasiPoly a(1, 2);
  a.set_piece({0}, dmd::Polynomial::constant(1, Rational(1)));
  EXPECT_FALSE(a.defined_at(Point{3}));
  EXPECT_THROW(a(Point{3}), std::domain_error);
}

}  // namespace
