#include <gtest/gtest.h>

#include <cmath>

#include "dmd/oracle.hpp"
#include "dmd/symbolic.hpp"
#include "support.hpp"

namespace {

using dmd::Rational;
using dmd::testing::corpus_source;
using Point = std::vector<std::int64_t>;

const dmd::SymbolicGroup* find_group(const dmd::SymbolicDistribution& d, dmd::ClassKey k) {
  for (const auto& g : d.groups)
    if (g.key == k) return &g;
  return nullptr;
}

// rd -> count predicted by the closed-form groups at one binding.
std::map<std::uint64_t, std::uint64_t> predicted(const dmd::SymbolicDistribution& d, const Point& b) {
  std::map<std::uint64_t, std::uint64_t> out;
  for (const auto& g : d.groups) {
    if (!g.closed_form || !g.rd->defined_at(b) || !g.multiplicity->defined_at(b)) continue;
    Rational m = (*g.multiplicity)(b);
    if (m.is_zero()) continue;
    Rational r = (*g.rd)(b);
    EXPECT_EQ(r.den(), 1);
    EXPECT_EQ(m.den(), 1);
    out[static_cast<std::uint64_t>(r.num())] += static_cast<std::uint64_t>(m.num());
  }
  return out;
}

std::map<std::uint64_t, std::uint64_t> measured(const dmd::ValidatedProgram& p, const Point& b) {
  // Independent of the analysis: interpreter trace through the stack simulator.
  auto trace = dmd::testing::elements(dmd::testing::Interpreter(p, b).run());
  std::map<std::uint64_t, std::uint64_t> out;
  for (const auto& r : dmd::oracle::stack_distances(trace))
    if (r) ++out[*r];
  return out;
}

TEST(Symbolic, Walkthrough) {
  auto p = dmd::compile(corpus_source("walkthrough"));
  auto d = dmd::analyze_symbolic(p);
  ASSERT_EQ(d.params, (std::vector<std::string>{"N", "M"}));
  EXPECT_EQ(d.period, 1);
  ASSERT_EQ(d.groups.size(), 1u);
  const auto& g = d.groups[0];
  EXPECT_TRUE(g.closed_form);
  EXPECT_TRUE(g.scaling);
  EXPECT_EQ((g.key), (dmd::ClassKey{1, 1, 0}));
  for (std::int64_t n = 1; n <= 9; ++n)
    for (std::int64_t m = 1; m <= 9; ++m) {
      Point b{n, m};
      EXPECT_EQ((*g.rd)(b), Rational(2 * m));
      EXPECT_EQ((*g.multiplicity)(b), Rational(m * n - m));
      EXPECT_EQ((*d.n_total)(b), Rational(2 * m * n));
      EXPECT_EQ((*d.n_cold)(b), Rational(m * n + m));
    }
  auto f = dmd::assemble_dmd(d);
  Point b{9, 7};
  double want = 9 * 7 + 7 + (9 * 7 - 7) * std::sqrt(14.0);
  EXPECT_NEAR(f.evaluate(b), want, 1e-9 * want);
  EXPECT_EQ(dmd::render_plain(g.rd->to_formula(d.params)), "2 * M");
}

TEST(Symbolic, MatmulHeldOut) {
  auto p = dmd::compile(corpus_source("matmul"));
  auto d = dmd::analyze_symbolic(p);
  Point b{5, 6, 7};  // M, N, K
  const std::int64_t M = 5, N = 6, K = 7;
  EXPECT_EQ((*d.n_total)(b), Rational(4 * M * N * K));
  EXPECT_EQ((*d.n_cold)(b), Rational(M * K + K * N + M * N));

  auto c = find_group(d, {0, 3, 2});
  ASSERT_TRUE(c);
  ASSERT_TRUE(c->closed_form);
  EXPECT_EQ((*c->rd)(b), Rational(1));
  EXPECT_EQ((*c->multiplicity)(b), Rational(M * N * K - M * N));
  EXPECT_TRUE(c->scaling);

  auto w = find_group(d, {3, 0, 3});
  ASSERT_TRUE(w);
  EXPECT_EQ((*w->rd)(b), Rational(3));
  EXPECT_EQ((*w->multiplicity)(b), Rational(M * N * K));

  auto a = find_group(d, {1, 1, 1});
  ASSERT_TRUE(a);
  EXPECT_EQ((*a->rd)(b), Rational(2 * K + 2));
  EXPECT_EQ((*a->multiplicity)(b), Rational(M * N * K - M * K));

  // Conservation over every class, including flagged ones.
  Rational warm(0);
  for (const auto& g : d.groups)
    if (g.multiplicity) warm = warm + (*g.multiplicity)(b);
  EXPECT_EQ(warm, (*d.n_warm)(b));
}

TEST(Symbolic, ScalingFilterDropsBoundaryGroup) {
  auto p = dmd::compile(corpus_source("scaling_boundary"));
  auto d = dmd::analyze_symbolic(p);
  auto inner = find_group(d, {1, 0, 2});
  auto tail = find_group(d, {2, 1, 0});
  ASSERT_TRUE(inner && tail);
  EXPECT_TRUE(inner->scaling);
  EXPECT_FALSE(tail->scaling);
  Point b{20};
  EXPECT_EQ((*inner->rd)(b), Rational(1));
  EXPECT_EQ((*inner->multiplicity)(b), Rational(20));
  EXPECT_EQ((*tail->rd)(b), Rational(20));
  EXPECT_EQ((*tail->multiplicity)(b), Rational(3));
  auto f = dmd::assemble_dmd(d);
  EXPECT_EQ(f.terms.size(), 1u);
  EXPECT_EQ(dmd::render_plain(f.expr), "2 * N");
}

TEST(Symbolic, EmptyProgram) {
  auto p = dmd::compile(corpus_source("empty"));
  auto d = dmd::analyze_symbolic(p);
  EXPECT_TRUE(d.groups.empty());
  EXPECT_EQ((*d.n_total)(Point{50}), Rational(0));
  EXPECT_EQ(dmd::render_plain(dmd::assemble_dmd(d).expr), "0");
}

TEST(Symbolic, ParameterFreeProgram) {
  auto p = dmd::compile(corpus_source("scalar"));
  auto d = dmd::analyze_symbolic(p);
  EXPECT_EQ(dmd::render_plain(dmd::assemble_dmd(d).expr), "1");
}

TEST(Symbolic, FloorDivisionUsesPeriodTwo) {
  auto p = dmd::compile(corpus_source("floordiv"));
  auto d = dmd::analyze_symbolic(p);
  EXPECT_EQ(d.period, 2);
  EXPECT_EQ(d.failures(), 0u);
  for (std::int64_t n : {10, 11, 24, 37}) {
    Point b{n};
    EXPECT_EQ((*d.n_total)(b), Rational(2 * n));
    EXPECT_EQ((*d.n_warm)(b), Rational(n / 2));
    EXPECT_EQ(predicted(d, b), measured(p, b)) << n;
  }
}

TEST(Symbolic, ForcedPeriodAndTooLargeGrid) {
  auto p = dmd::compile(corpus_source("walkthrough"));
  dmd::SymbolicConfig cfg;
  cfg.period = 3;
  auto d = dmd::analyze_symbolic(p, 1, 1, cfg);
  EXPECT_EQ(d.period, 3);
  EXPECT_EQ(d.base % 3, 0);
  EXPECT_EQ((*d.groups[0].rd)(Point{7, 8}), Rational(16));
  cfg.max_bindings = 10;
  EXPECT_THROW(dmd::analyze_symbolic(p, 1, 1, cfg), dmd::ResourceError);
}

TEST(Symbolic, SampleGridLayout) {
  auto p = dmd::compile(corpus_source("walkthrough"));
  auto d = dmd::analyze_symbolic(p);
  EXPECT_EQ(d.degree, 2u);
  EXPECT_EQ(d.base, 4);
  EXPECT_EQ(d.grid.size(), 16u);  // (degree + 1 + retries)^2
  EXPECT_EQ(d.validation.size(), 2u);
  for (const auto& v : d.validation) EXPECT_EQ(std::count(d.grid.begin(), d.grid.end(), v), 0);
}

struct Case {
  std::string name;
  std::string source;
};

void PrintTo(const Case& c, std::ostream* os) { *os << c.name; }

std::vector<Case> cases() {
  std::vector<Case> out;
  for (auto& c : dmd::testing::corpus()) out.push_back({c.name, c.source});
  for (std::uint32_t seed = 500; seed < 520; ++seed)
    out.push_back({"random" + std::to_string(seed), dmd::testing::RandomProgram(seed).generate(3)});
  return out;
}

class SymbolicProperties : public ::testing::TestWithParam<Case> {};

TEST_P(SymbolicProperties, ExactAtHeldOutBindings) {
  auto p = dmd::compile(GetParam().source);
  auto d = dmd::analyze_symbolic(p);
  bool flagged = std::any_of(d.groups.begin(), d.groups.end(), [](const auto& g) { return !g.closed_form; });
  for (auto b : dmd::testing::small_bindings(p, {11, 13, 16})) {
    auto want = measured(p, b);
    auto trace = dmd::testing::elements(dmd::testing::Interpreter(p, b).run());
    if (d.n_total) {
      EXPECT_EQ((*d.n_total)(b), Rational(static_cast<std::int64_t>(trace.size())));
    }
    if (d.n_cold) {
      EXPECT_EQ((*d.n_cold)(b), Rational(static_cast<std::int64_t>(dmd::oracle::footprint(trace))));
    }
    auto got = predicted(d, b);
    if (!flagged) {
      EXPECT_EQ(got, want);
    } else {
      for (auto [rd, n] : got) EXPECT_LE(n, want[rd]) << "rd " << rd;
    }
  }
}

TEST_P(SymbolicProperties, MultiplicitiesSumToWarmCount) {
  auto p = dmd::compile(GetParam().source);
  auto d = dmd::analyze_symbolic(p);
  if (!d.n_warm) GTEST_SKIP() << "warm count has no closed form";
  for (const auto& b : d.validation) {
    Rational sum(0);
    bool complete = true;
    for (const auto& g : d.groups) {
      if (!g.multiplicity || !g.multiplicity->defined_at(b)) {
        complete = false;
        continue;
      }
      sum = sum + (*g.multiplicity)(b);
    }
    if (complete) {
      EXPECT_EQ(sum, (*d.n_warm)(b));
    }
  }
}

TEST_P(SymbolicProperties, FormulaMatchesNumericValue) {
  auto p = dmd::compile(GetParam().source);
  auto d = dmd::analyze_symbolic(p);
  if (d.failures() > 0) GTEST_SKIP() << "not every class has a closed form";
  // Full sum over all classes, scaling or not, equals the measured value.
  for (auto b : dmd::testing::small_bindings(p, {9, 12, 14})) {
    double sym = (*d.n_cold)(b).to_double();
    for (const auto& g : d.groups)
      if (g.rd->defined_at(b)) sym += (*g.multiplicity)(b).to_double() * std::sqrt((*g.rd)(b).to_double());
    auto space = dmd::build_timestamp_space(p);
    auto map = dmd::build_access_map(p);
    double num = dmd::dmd_numeric(dmd::concrete_distribution(space, map, b));
    EXPECT_NEAR(sym, num, 1e-9 * std::max(1.0, num));
  }
  // The assembled formula keeps exactly the scaling groups.
  auto f = dmd::assemble_dmd(d);
  auto scaling = std::count_if(d.groups.begin(), d.groups.end(), [](const auto& g) { return g.scaling; });
  EXPECT_EQ(f.terms.size(), static_cast<std::size_t>(scaling));
  for (auto b : dmd::testing::small_bindings(p, {9, 12, 14})) {
    double direct = (*d.n_cold)(b).to_double();
    for (const auto& g : d.groups)
      if (g.scaling && g.rd->defined_at(b))
        direct += (*g.multiplicity)(b).to_double() * std::sqrt((*g.rd)(b).to_double());
    EXPECT_NEAR(f.evaluate(b), direct, 1e-9 * std::max(1.0, direct));
    if (d.period == 1) {
      dmd::SymbolBinding sb;
      for (std::size_t k = 0; k < b.size(); ++k) sb[d.params[k]] = static_cast<double>(b[k]);
      EXPECT_NEAR(dmd::evaluate(f.expr, sb), direct, 1e-9 * std::max(1.0, direct));
    }
  }
}

TEST_P(SymbolicProperties, FilterKeepsOnlyGrowingGroups) {
  auto p = dmd::compile(GetParam().source);
  auto d = dmd::analyze_symbolic(p);
  for (const auto& g : d.groups) {
    EXPECT_EQ(g.scaling, dmd::scaling_filter(g));
    if (!g.multiplicity) continue;
    if (!g.multiplicity->grows()) {
      EXPECT_FALSE(g.scaling);
      // A constant population stays constant across each residue class.
      std::map<dmd::QuasiPoly::Residue, Rational> seen;
      for (const auto& b : d.grid) {
        if (!g.multiplicity->defined_at(b)) continue;
        Rational v = (*g.multiplicity)(b);
        auto [it, fresh] = seen.emplace(g.multiplicity->residue_of(b), v);
        if (!fresh) {
          EXPECT_EQ(v, it->second);
        }
      }
    }
  }
}

TEST_P(SymbolicProperties, PeriodIsNaturalOrOne) {
  auto p = dmd::compile(GetParam().source);
  auto d = dmd::analyze_symbolic(p);
  auto natural = dmd::natural_period(p, 1, 1);
  EXPECT_TRUE(d.period == 1 || d.period == natural);
  if (d.period > 1) {
    for (const auto& g : d.groups)
      if (g.rd) {
        EXPECT_EQ(natural % g.rd->period(), 0);
      }
  }
}

INSTANTIATE_TEST_SUITE_P(Programs, SymbolicProperties, ::testing::ValuesIn(cases()),
                         [](const auto& info) { return info.param.name; });

}  // namespace
