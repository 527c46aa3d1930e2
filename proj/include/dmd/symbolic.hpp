#pragma once

// Closed-form reuse-distance distributions by sampling and interpolation.
//
// The concrete engine runs on a grid of parameter bindings. Warm accesses are
// grouped structurally by (source statement, predecessor statement, carrier
// dimension) and, within a group, by rank of their distinct rd values. Each
// rank's rd value and multiplicity are then interpolated as quasi-polynomials
// and checked on held-out bindings. Groups whose rd varies with the iteration
// (not just the parameters) are split further by loop-boundary position.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dmd/locality.hpp"
#include "dmd/quasi_poly.hpp"

namespace dmd {

struct SymbolicConfig {
  std::optional<std::int64_t> sample_base;
  unsigned degree = 0;  // 0: deepest loop nest
  unsigned retries = 1;
  unsigned validation_count = 2;
  std::vector<std::vector<std::int64_t>> validation_bindings;  // extra held-out points, parameter order
  std::optional<std::int64_t> period;                          // force a period
  std::size_t max_bindings = 4096;
  EnumerationLimits limits;
};

struct ClassKey {
  std::size_t source = 0;
  std::size_t pred = 0;
  std::size_t carrier = 0;
  friend auto operator<=>(const ClassKey&, const ClassKey&) = default;
};

struct BindingSample {
  std::vector<std::int64_t> binding;
  std::vector<RdGroup> groups;
};

enum class Presence { All, ResidueAligned, Partial };

struct SymbolicGroup {
  ClassKey key;
  std::string region = "all";
  std::optional<QuasiPoly> rd;
  std::optional<QuasiPoly> multiplicity;
  bool closed_form = false;
  bool scaling = false;
  Presence presence = Presence::All;
  std::string note;
  std::vector<BindingSample> samples;  // only for groups without a closed form
};

struct SymbolicDistribution {
  std::vector<std::string> params;
  std::int64_t period = 1;
  unsigned degree = 1;
  std::int64_t base = 0;
  std::vector<std::vector<std::int64_t>> grid;
  std::vector<std::vector<std::int64_t>> validation;
  std::vector<SymbolicGroup> groups;
  std::optional<QuasiPoly> n_total, n_warm, n_cold;
  std::vector<std::string> notes;

  std::size_t failures() const {
    std::size_t f = (n_total ? 0 : 1) + (n_warm ? 0 : 1);
    for (const auto& g : groups) f += g.closed_form ? 0 : 1;
    return f;
  }
};

/// Produces a quasi-polynomial from exact samples. The default backend
/// interpolates; a parametric-counting library could stand in.
class CountingBackend {
 public:
  virtual ~CountingBackend() = default;
  virtual QuasiPoly count(const std::vector<Sample>& fit_samples, const std::vector<Sample>& check_samples,
                          unsigned degree, std::int64_t period) const = 0;
};

class InterpolationBackend final : public CountingBackend {
 public:
  QuasiPoly count(const std::vector<Sample>& fit_samples, const std::vector<Sample>& check_samples,
                  unsigned degree, std::int64_t period) const override {
    return fit(fit_samples, check_samples, degree, period);
  }
};

/// A group contributes to the asymptotic formula only if its population grows
/// with the parameters and is present wherever its residue class is sampled.
inline bool scaling_filter(const SymbolicGroup& g) {
  return g.multiplicity && g.multiplicity->grows() && g.presence != Presence::Partial;
}

/// Lowest common period of everything that makes counts non-polynomial.
inline std::int64_t natural_period(const ValidatedProgram& program, std::int64_t block_size,
                                   std::int64_t num_sets) {
  std::int64_t p = std::lcm(block_size, num_sets);
  for (auto s : program.steps()) p = std::lcm(p, s);
  for (auto d : program.divisors()) p = std::lcm(p, d);
  return p;
}

namespace sym_detail {

using Dist = std::map<std::uint64_t, std::uint64_t>;  // rd -> count

struct RefinedKey {
  ClassKey key;
  std::uint64_t sig_t = 0;
  std::uint64_t sig_p = 0;
  friend auto operator<=>(const RefinedKey&, const RefinedKey&) = default;
};

struct BindingStats {
  std::vector<std::int64_t> binding;
  bool grid = true;
  std::uint64_t n_total = 0;
  std::uint64_t n_warm = 0;
  std::map<ClassKey, Dist> base;
  std::map<RefinedKey, Dist> refined;
};

// Position of each loop ordinal, three bits per dimension:
// 0 not a loop, 1 first, 2 interior, 3 last, 4 only iteration.
inline std::uint64_t boundary_signature(std::span<const std::int64_t> point,
                                        std::span<const std::int64_t> trips) {
  std::uint64_t sig = 0;
  for (std::size_t d = 0; d < point.size() && d < 21; ++d) {
    if (trips[d] <= 0) continue;
    std::uint64_t code = trips[d] == 1 ? 4 : point[d] == 0 ? 1 : point[d] == trips[d] - 1 ? 3 : 2;
    sig |= code << (3 * d);
  }
  return sig;
}

inline std::string describe_signature(std::uint64_t sig, std::size_t dims) {
  static constexpr const char* names[] = {"*", "F", "I", "L", "O"};
  std::string s = "(";
  for (std::size_t d = 0; d < dims && d < 21; ++d) s += (d ? "," : "") + std::string(names[(sig >> (3 * d)) & 7]);
  return s + ")";
}

inline BindingStats collect(const TimestampSpace& space, const AccessMap& map,
                            const std::vector<std::int64_t>& binding, const EnumerationLimits& limits) {
  BindingStats st;
  st.binding = binding;
  StreamOptions opts;
  opts.limits = limits;
  opts.track_predecessors = true;
  const std::size_t dims = space.dimension();
  auto totals = analyze_stream(
      space, map, binding,
      [&](const TraceEvent& e) {
        if (!e.warm) return;
        ++st.n_warm;
        std::size_t carrier = 0;
        while (carrier < dims && e.point[carrier] == e.pred_point[carrier]) ++carrier;
        ClassKey k{e.statement, e.pred_statement, carrier};
        ++st.base[k][e.rd];
        RefinedKey rk{k, boundary_signature(e.point, e.trips), boundary_signature(e.pred_point, e.pred_trips)};
        ++st.refined[rk][e.rd];
      },
      opts);
  st.n_total = totals.n_total;
  return st;
}

struct RankFit {
  QuasiPoly rd;
  QuasiPoly multiplicity;
};

struct ClassFit {
  bool ok = false;
  std::string reason;
  Presence presence = Presence::All;
  std::vector<RankFit> ranks;
  std::optional<QuasiPoly> total;  // total multiplicity across ranks
};

class Fitter {
 public:
  Fitter(const CountingBackend& backend, const std::vector<BindingStats>& stats, std::size_t nvars,
         unsigned degree, unsigned retries, std::int64_t period)
      : backend_(backend), stats_(stats), nvars_(nvars), degree_(degree), retries_(retries), period_(period) {}

  QuasiPoly fit_values(const std::vector<Sample>& fit_s, const std::vector<Sample>& check_s) const {
    std::string last = "no samples";
    for (unsigned d = degree_; d <= degree_ + retries_; ++d) {
      try {
        return backend_.count(fit_s, check_s, d, period_);
      } catch (const FitFailure& f) {
        last = f.what();
      }
    }
    throw FitFailure(last);
  }

  template <class Value>
  QuasiPoly fit_scalar(Value&& value) const {
    std::vector<Sample> f, c;
    for (const auto& s : stats_) (s.grid ? f : c).push_back({s.binding, Rational(value(s))});
    return fit_values(f, c);
  }

  /// `dist(i)` returns the distribution of the class at binding i, or null
  /// when the class does not occur there.
  template <class Lookup>
  ClassFit fit_class(Lookup&& dist) const {
    ClassFit out;
    QuasiPoly probe(nvars_, period_);
    std::map<QuasiPoly::Residue, std::pair<int, int>> seen;  // residue -> (present, absent) on grid
    std::map<QuasiPoly::Residue, bool> residue_present;
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      if (!stats_[i].grid) continue;
      auto& c = seen[probe.residue_of(stats_[i].binding)];
      (dist(i) ? c.first : c.second)++;
    }
    bool all = true;
    for (const auto& [r, c] : seen) {
      if (c.first > 0 && c.second > 0) {
        out.presence = Presence::Partial;
        out.reason = "absent at some sampled bindings";
        return out;
      }
      residue_present[r] = c.first > 0;
      all = all && c.first > 0;
    }
    out.presence = all ? Presence::All : Presence::ResidueAligned;

    std::vector<std::size_t> used;
    std::optional<std::size_t> rank_count;
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      auto r = probe.residue_of(stats_[i].binding);
      bool expect = residue_present.count(r) ? residue_present[r] : dist(i) != nullptr;
      const Dist* d = dist(i);
      if ((d != nullptr) != expect) {
        out.presence = Presence::Partial;
        out.reason = "presence at held-out bindings differs from the sample grid";
        return out;
      }
      if (!d) continue;
      used.push_back(i);
      if (rank_count && *rank_count != d->size()) {
        out.reason = "number of distinct reuse distances varies with the parameters";
        total_only(out, dist, used);
        return out;
      }
      rank_count = d->size();
    }
    if (used.empty()) {
      out.presence = Presence::Partial;
      out.reason = "absent from the sample grid";
      return out;
    }
    try {
      for (std::size_t rank = 0; rank < *rank_count; ++rank) {
        std::vector<Sample> rf, rc, mf, mc;
        for (std::size_t i : used) {
          auto it = std::next(dist(i)->begin(), static_cast<std::ptrdiff_t>(rank));
          bool g = stats_[i].grid;
          (g ? rf : rc).push_back({stats_[i].binding, Rational(static_cast<std::int64_t>(it->first))});
          (g ? mf : mc).push_back({stats_[i].binding, Rational(static_cast<std::int64_t>(it->second))});
        }
        out.ranks.push_back({fit_values(rf, rc), zero_fill(fit_values(mf, mc))});
      }
    } catch (const FitFailure& f) {
      out.ranks.clear();
      out.reason = std::string("fit failed: ") + f.what();
      total_only(out, dist, used);
      return out;
    }
    out.ok = true;
    QuasiPoly total = QuasiPoly::polynomial(Polynomial::constant(nvars_, 0));
    for (const auto& r : out.ranks) total = total + r.multiplicity;
    out.total = total;
    return out;
  }

 private:
  // Multiplicity is zero on residue classes where the group never occurs.
  QuasiPoly zero_fill(QuasiPoly q) const {
    QuasiPoly full = q.lift(period_);
    QuasiPoly::Residue r(nvars_, 0);
    for (std::size_t i = 0; i < full.residue_count(); ++i) {
      if (!full.pieces().count(r)) full.set_piece(r, Polynomial(nvars_));
      for (std::size_t k = 0; k < nvars_; ++k) {
        if (++r[k] < period_) break;
        r[k] = 0;
      }
    }
    return full.collapsed();
  }

  template <class Lookup>
  void total_only(ClassFit& out, Lookup& dist, const std::vector<std::size_t>& /*used*/) const {
    std::vector<Sample> f, c;
    for (std::size_t i = 0; i < stats_.size(); ++i) {
      const Dist* d = dist(i);
      if (!d) continue;
      std::int64_t m = 0;
      for (auto [rd, cnt] : *d) m += static_cast<std::int64_t>(cnt);
      (stats_[i].grid ? f : c).push_back({stats_[i].binding, Rational(m)});
    }
    try {
      out.total = zero_fill(fit_values(f, c));
    } catch (const FitFailure&) {
      out.total.reset();
    }
  }

  const CountingBackend& backend_;
  const std::vector<BindingStats>& stats_;
  std::size_t nvars_;
  unsigned degree_;
  unsigned retries_;
  std::int64_t period_;
};

inline std::vector<BindingSample> pick_samples(const std::vector<BindingStats>& stats,
                                               const std::function<const Dist*(std::size_t)>& dist) {
  std::vector<BindingSample> out;
  std::optional<std::size_t> first_grid, last_grid;
  for (std::size_t i = 0; i < stats.size(); ++i)
    if (stats[i].grid) {
      if (!first_grid) first_grid = i;
      last_grid = i;
    }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].grid && i != first_grid && i != last_grid) continue;
    BindingSample s{stats[i].binding, {}};
    if (const Dist* d = dist(i))
      for (auto [rd, c] : *d) s.groups.push_back({rd, c});
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<std::vector<std::int64_t>> sample_grid(std::size_t nvars, std::int64_t base,
                                                          std::int64_t period, std::size_t per_axis) {
  std::vector<std::vector<std::int64_t>> out;
  std::vector<std::size_t> idx(nvars, 0);
  std::size_t per = static_cast<std::size_t>(period) * per_axis;
  std::size_t total = 1;
  for (std::size_t k = 0; k < nvars; ++k) total *= per;
  for (std::size_t n = 0; n < total; ++n) {
    std::vector<std::int64_t> b(nvars);
    std::size_t rest = n;
    for (std::size_t k = nvars; k-- > 0;) {
      b[k] = base + static_cast<std::int64_t>(rest % per);
      rest /= per;
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace sym_detail

/// Samples, classifies and fits at one period.
inline SymbolicDistribution analyze_symbolic_at(const ValidatedProgram& program, std::int64_t block_size,
                                                std::int64_t num_sets, const SymbolicConfig& config,
                                                std::int64_t period,
                                                const CountingBackend& backend = InterpolationBackend{}) {
  using namespace sym_detail;
  auto space = build_timestamp_space(program);
  auto map = build_access_map(program, block_size, num_sets);
  const std::size_t n = program.params().size();

  SymbolicDistribution out;
  out.params = program.params();
  out.period = period;
  out.degree = config.degree ? config.degree : static_cast<unsigned>(std::max<std::size_t>(1, program.max_loop_depth()));
  if (config.sample_base) {
    out.base = *config.sample_base;
  } else {
    std::int64_t want = std::max<std::int64_t>(4 * period, 2 * out.degree);
    out.base = ceil_div(want, period) * period;
  }
  const std::size_t per_axis = out.degree + 1 + config.retries;
  out.grid = sample_grid(n, out.base, period, per_axis);
  if (out.grid.size() > config.max_bindings)
    throw ResourceError("sample grid of " + std::to_string(out.grid.size()) + " bindings exceeds the limit of " +
                        std::to_string(config.max_bindings));
  std::int64_t top = out.base + period * static_cast<std::int64_t>(per_axis) - 1;
  for (unsigned v = 0; v < config.validation_count && n > 0; ++v) {
    std::vector<std::int64_t> b(n);
    for (std::size_t k = 0; k < n; ++k) b[k] = top + 1 + v + 2 * static_cast<std::int64_t>(k);
    out.validation.push_back(std::move(b));
  }
  for (const auto& b : config.validation_bindings) {
    if (b.size() != n) throw std::invalid_argument("validation binding has the wrong number of values");
    if (std::find(out.grid.begin(), out.grid.end(), b) == out.grid.end() &&
        std::find(out.validation.begin(), out.validation.end(), b) == out.validation.end())
      out.validation.push_back(b);
  }

  std::vector<BindingStats> stats;
  for (const auto& b : out.grid) stats.push_back(collect(space, map, b, config.limits));
  for (const auto& b : out.validation) {
    stats.push_back(collect(space, map, b, config.limits));
    stats.back().grid = false;
  }

  Fitter fitter(backend, stats, n, out.degree, config.retries, period);
  try {
    out.n_total = fitter.fit_scalar([](const BindingStats& s) { return static_cast<std::int64_t>(s.n_total); });
  } catch (const FitFailure& f) {
    out.notes.push_back(std::string("access count has no closed form: ") + f.what());
  }
  try {
    out.n_warm = fitter.fit_scalar([](const BindingStats& s) { return static_cast<std::int64_t>(s.n_warm); });
  } catch (const FitFailure& f) {
    out.notes.push_back(std::string("warm count has no closed form: ") + f.what());
  }
  if (out.n_total && out.n_warm) out.n_cold = *out.n_total - *out.n_warm;

  std::set<ClassKey> keys;
  for (const auto& s : stats)
    for (const auto& [k, d] : s.base) keys.insert(k);

  for (const ClassKey& key : keys) {
    auto base_lookup = [&](std::size_t i) -> const Dist* {
      auto it = stats[i].base.find(key);
      return it == stats[i].base.end() ? nullptr : &it->second;
    };
    ClassFit cf = fitter.fit_class(base_lookup);
    if (cf.ok) {
      for (std::size_t r = 0; r < cf.ranks.size(); ++r) {
        SymbolicGroup g;
        g.key = key;
        g.region = cf.ranks.size() == 1 ? "all" : "rank " + std::to_string(r);
        g.rd = cf.ranks[r].rd;
        g.multiplicity = cf.ranks[r].multiplicity;
        g.closed_form = true;
        g.presence = cf.presence;
        g.scaling = scaling_filter(g);
        out.groups.push_back(std::move(g));
      }
      continue;
    }

    // Split by boundary position of the access and its predecessor.
    std::set<std::pair<std::uint64_t, std::uint64_t>> sigs;
    for (const auto& s : stats)
      for (const auto& [rk, d] : s.refined)
        if (rk.key == key) sigs.insert({rk.sig_t, rk.sig_p});
    std::vector<SymbolicGroup> merged, flagged;
    for (auto [st, sp] : sigs) {
      RefinedKey rk{key, st, sp};
      std::function<const Dist*(std::size_t)> lookup = [&](std::size_t i) -> const Dist* {
        auto it = stats[i].refined.find(rk);
        return it == stats[i].refined.end() ? nullptr : &it->second;
      };
      ClassFit sub = fitter.fit_class(lookup);
      std::string region = "t" + describe_signature(st, space.dimension()) + " pred" +
                           describe_signature(sp, space.dimension());
      if (!sub.ok) {
        SymbolicGroup g;
        g.key = key;
        g.region = region;
        g.multiplicity = sub.total;
        g.presence = sub.presence;
        g.note = "no closed form found: " + sub.reason;
        g.samples = pick_samples(stats, lookup);
        g.scaling = scaling_filter(g);
        flagged.push_back(std::move(g));
        continue;
      }
      for (auto& rank : sub.ranks) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const SymbolicGroup& g) { return *g.rd == rank.rd; });
        if (it != merged.end()) {
          *it->multiplicity = *it->multiplicity + rank.multiplicity;
          if (sub.presence != it->presence) it->presence = Presence::ResidueAligned;
          it->region = "boundary-merged";
          continue;
        }
        SymbolicGroup g;
        g.key = key;
        g.region = region;
        g.rd = rank.rd;
        g.multiplicity = rank.multiplicity;
        g.closed_form = true;
        g.presence = sub.presence;
        merged.push_back(std::move(g));
      }
    }
    for (auto& g : merged) {
      // A merged group covers every binding where any of its parts occurs.
      bool everywhere = std::all_of(stats.begin(), stats.end(), [&](const BindingStats& s) {
        return !s.grid || !(*g.multiplicity)(s.binding).is_zero();
      });
      if (everywhere) g.presence = Presence::All;
      g.scaling = scaling_filter(g);
      out.groups.push_back(std::move(g));
    }
    for (auto& g : flagged) out.groups.push_back(std::move(g));
  }
  return out;
}

/// Fits at period 1 first, falling back to the program's natural period when
/// some count is not polynomial.
inline SymbolicDistribution analyze_symbolic(const ValidatedProgram& program, std::int64_t block_size = 1,
                                             std::int64_t num_sets = 1, const SymbolicConfig& config = {},
                                             const CountingBackend& backend = InterpolationBackend{}) {
  if (config.period) return analyze_symbolic_at(program, block_size, num_sets, config, *config.period, backend);
  SymbolicDistribution first = analyze_symbolic_at(program, block_size, num_sets, config, 1, backend);
  std::int64_t p = natural_period(program, block_size, num_sets);
  if (first.failures() == 0 || p == 1) return first;
  try {
    SymbolicDistribution second = analyze_symbolic_at(program, block_size, num_sets, config, p, backend);
    if (second.failures() < first.failures()) {
      second.notes.push_back("period " + std::to_string(p) + " used after period-1 fits failed");
      return second;
    }
  } catch (const ResourceError& e) {
    first.notes.push_back(std::string("period ") + std::to_string(p) + " not tried: " + e.what());
  }
  return first;
}

struct DMDFormula {
  FormulaExpr cold_term = FormulaExpr::number(0);
  std::vector<std::pair<FormulaExpr, FormulaExpr>> warm_terms;  // (multiplicity, sqrt argument)
  FormulaExpr expr = FormulaExpr::number(0);
  std::optional<QuasiPoly> cold;
  std::vector<std::pair<QuasiPoly, QuasiPoly>> terms;  // (multiplicity, rd)

  /// Numeric value at a binding, in parameter order.
  double evaluate(std::span<const std::int64_t> binding) const {
    if (!cold) throw std::domain_error("cold count has no closed form");
    double s = (*cold)(binding).to_double();
    for (const auto& [m, r] : terms) {
      if (!r.defined_at(binding)) continue;
      s += m(binding).to_double() * std::sqrt(r(binding).to_double());
    }
    return s;
  }
};

inline DMDFormula assemble_dmd(const SymbolicDistribution& dist) {
  DMDFormula f;
  f.cold = dist.n_cold;
  f.cold_term = dist.n_cold ? dist.n_cold->to_formula(dist.params)
                            : FormulaExpr::raw("n_cold", "n_{\\mathrm{cold}}");
  std::vector<FormulaExpr> sum{f.cold_term};
  for (const auto& g : dist.groups) {
    if (!g.scaling || !g.closed_form) continue;
    FormulaExpr m = g.multiplicity->to_formula(dist.params);
    FormulaExpr r = g.rd->to_formula(dist.params);
    f.warm_terms.emplace_back(m, r);
    f.terms.emplace_back(*g.multiplicity, *g.rd);
    sum.push_back(FormulaExpr::mul({m, FormulaExpr::sqrt(r)}));
  }
  f.expr = simplify(FormulaExpr::add(std::move(sum)));
  return f;
}

}  // namespace dmd
