#pragma once

// Lowering of a validated program to a timestamp space (ordinal loop
// dimensions plus selector dimensions for multi-statement blocks) and an
// access map from timestamps to data-space points.

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

#include "dmd/dsl.hpp"
#include "dmd/formula.hpp"

namespace dmd {

/// Enumeration exceeded its configured budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A cooperative stop request was observed.
class Cancelled : public std::runtime_error {
 public:
  Cancelled() : std::runtime_error("analysis cancelled") {}
};

using ParamBinding = std::map<std::string, std::int64_t, std::less<>>;

/// Orders binding values by the program's parameter declaration order.
inline std::vector<std::int64_t> bind_params(const ValidatedProgram& program,
                                             const ParamBinding& binding) {
  std::vector<std::int64_t> out;
  for (const auto& name : program.params()) {
    auto it = binding.find(name);
    if (it == binding.end()) throw std::invalid_argument("no value bound for parameter '" + name + "'");
    if (it->second < 0) throw std::invalid_argument("parameter '" + name + "' must be non-negative");
    out.push_back(it->second);
  }
  for (const auto& [name, value] : binding) {
    if (std::find(program.params().begin(), program.params().end(), name) == program.params().end())
      throw std::invalid_argument("'" + name + "' is not a parameter of the program");
  }
  return out;
}

inline constexpr std::uint64_t kDefaultPointCap = 10'000'000;

/// Point cap, overridable through DMD_ENUMERATION_CAP.
inline std::uint64_t default_point_cap() {
  if (const char* env = std::getenv("DMD_ENUMERATION_CAP")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return kDefaultPointCap;
}

struct EnumerationLimits {
  std::uint64_t max_points = default_point_cap();
  std::stop_token stop;
};

struct ScheduleNode {
  enum class Kind { Loop, Sequence, Guard, Access };

  Kind kind = Kind::Access;
  std::size_t dim = 0;  // Loop / Sequence: timestamp position
  // Loop
  std::size_t loop_depth = 0;
  std::string iterator;
  Expr lower;
  Expr upper;
  std::int64_t step = 1;
  // Guard
  std::vector<Comparison> conditions;
  // Loop: [body]; Sequence: statements; Guard: [then, else]
  std::vector<ScheduleNode> children;
  // Access
  std::size_t statement = 0;
  bool has_access = false;
};

/// One timestamp dimension as seen along a single branch path.
struct DimSpec {
  enum class Kind { Loop, Selector, Padding };
  Kind kind = Kind::Padding;
  std::string iterator;
  std::size_t loop_depth = 0;
  Expr lower;
  Expr upper;
  std::int64_t step = 1;
  std::int64_t selector = 0;
  std::int64_t branch_count = 0;
};

/// A conjunctive piece of the timestamp space reaching one access statement.
struct Piece {
  std::size_t statement = 0;
  std::string path;
  std::vector<DimSpec> dims;
  std::vector<Comparison> guards;
};

struct VisitedPoint {
  std::span<const std::int64_t> point;
  std::size_t statement;
  std::span<const std::int64_t> iterators;  // by loop depth
  std::span<const std::int64_t> trips;      // per dim: loop trip count, 0 elsewhere
};

struct LocatedPoint {
  std::size_t statement;
  std::vector<std::int64_t> iterators;
};

class TimestampSpace {
 public:
  std::size_t dimension() const { return dims_; }
  const ScheduleNode& root() const { return root_; }
  const std::vector<std::string>& params() const { return params_; }
  std::size_t max_loop_depth() const { return max_depth_; }

  /// Visits every member point in lexicographic (= execution) order.
  template <class Visitor>
  void enumerate(std::span<const std::int64_t> params, Visitor&& visit,
                 const EnumerationLimits& limits = {}) const {
    Walk<Visitor> w{*this, params, visit, limits};
    w.point.assign(dims_, 0);
    w.trips.assign(dims_, 0);
    w.iterators.assign(max_depth_, 0);
    w.run(root_);
  }

  /// Collects all member points; convenient for small bindings.
  std::vector<std::vector<std::int64_t>> points(std::span<const std::int64_t> params,
                                                const EnumerationLimits& limits = {}) const {
    std::vector<std::vector<std::int64_t>> out;
    enumerate(params, [&](const VisitedPoint& v) { out.emplace_back(v.point.begin(), v.point.end()); },
              limits);
    return out;
  }

  std::uint64_t count(std::span<const std::int64_t> params, const EnumerationLimits& limits = {}) const {
    std::uint64_t n = 0;
    enumerate(params, [&](const VisitedPoint&) { ++n; }, limits);
    return n;
  }

  /// Resolves a point to the access statement it selects, or nullopt when the
  /// point is not a member of the space.
  std::optional<LocatedPoint> locate(std::span<const std::int64_t> point,
                                     std::span<const std::int64_t> params) const {
    if (point.size() != dims_) return std::nullopt;
    LocatedPoint out{0, std::vector<std::int64_t>(max_depth_, 0)};
    std::vector<bool> used(dims_, false);
    const ScheduleNode* n = &root_;
    for (;;) {
      if (!n->has_access) return std::nullopt;
      switch (n->kind) {
        case ScheduleNode::Kind::Loop: {
          std::int64_t lo = evaluate(n->lower, params, out.iterators);
          std::int64_t hi = evaluate(n->upper, params, out.iterators);
          std::int64_t trip = std::max<std::int64_t>(0, ceil_div(hi - lo, n->step));
          std::int64_t o = point[n->dim];
          if (o < 0 || o >= trip) return std::nullopt;
          out.iterators[n->loop_depth] = lo + o * n->step;
          used[n->dim] = true;
          n = &n->children.front();
          break;
        }
        case ScheduleNode::Kind::Sequence: {
          std::int64_t k = point[n->dim];
          if (k < 0 || k >= static_cast<std::int64_t>(n->children.size())) return std::nullopt;
          used[n->dim] = true;
          n = &n->children[static_cast<std::size_t>(k)];
          break;
        }
        case ScheduleNode::Kind::Guard: {
          bool ok = std::all_of(n->conditions.begin(), n->conditions.end(),
                                [&](const Comparison& c) { return holds(c, params, out.iterators); });
          n = &n->children[ok ? 0 : 1];
          break;
        }
        case ScheduleNode::Kind::Access:
          for (std::size_t d = 0; d < dims_; ++d)
            if (!used[d] && point[d] != 0) return std::nullopt;
          out.statement = n->statement;
          return out;
      }
    }
  }

  /// Conjunctive pieces, one per (access statement, guard alternative).
  std::vector<Piece> pieces() const {
    std::vector<Piece> out;
    Piece cur;
    cur.dims.assign(dims_, DimSpec{});
    collect(root_, cur, {}, out);
    return out;
  }

 private:
  friend TimestampSpace build_timestamp_space(const ValidatedProgram& program);

  template <class Visitor>
  struct Walk {
    const TimestampSpace& space;
    std::span<const std::int64_t> params;
    Visitor& visit;
    const EnumerationLimits& limits;
    std::vector<std::int64_t> point, trips, iterators;
    std::uint64_t emitted = 0;
    std::uint64_t steps = 0;

    void tick() {
      if ((++steps & 0xFFF) == 0) {
        if (limits.stop.stop_requested()) throw Cancelled();
        if (steps > 16 * limits.max_points + (1u << 20))
          throw ResourceError("enumeration exceeded its iteration budget");
      }
    }

    void run(const ScheduleNode& n) {
      if (!n.has_access) return;  // owns no timestamp dimensions
      switch (n.kind) {
        case ScheduleNode::Kind::Loop: {
          std::int64_t lo = evaluate(n.lower, params, iterators);
          std::int64_t hi = evaluate(n.upper, params, iterators);
          std::int64_t trip = std::max<std::int64_t>(0, ceil_div(hi - lo, n.step));
          trips[n.dim] = trip;
          for (std::int64_t o = 0; o < trip; ++o) {
            tick();
            point[n.dim] = o;
            iterators[n.loop_depth] = lo + o * n.step;
            run(n.children.front());
          }
          point[n.dim] = 0;
          trips[n.dim] = 0;
          return;
        }
        case ScheduleNode::Kind::Sequence:
          for (std::size_t k = 0; k < n.children.size(); ++k) {
            point[n.dim] = static_cast<std::int64_t>(k);
            run(n.children[k]);
          }
          point[n.dim] = 0;
          return;
        case ScheduleNode::Kind::Guard: {
          bool ok = std::all_of(n.conditions.begin(), n.conditions.end(),
                                [&](const Comparison& c) { return holds(c, params, iterators); });
          run(n.children[ok ? 0 : 1]);
          return;
        }
        case ScheduleNode::Kind::Access:
          if (++emitted > limits.max_points)
            throw ResourceError("timestamp space exceeds the enumeration cap of " +
                                std::to_string(limits.max_points) + " points");
          tick();
          visit(VisitedPoint{point, n.statement, iterators, trips});
          return;
      }
    }
  };

  static Comparison negated(const Comparison& c, CmpOp op) {
    Comparison out = c;
    out.op = op;
    return out;
  }

  void collect(const ScheduleNode& n, Piece& cur, std::vector<std::string> path,
               std::vector<Piece>& out) const {
    auto join_path = [](const std::vector<std::string>& p) {
      std::string s;
      for (std::size_t i = 0; i < p.size(); ++i) s += (i ? "." : "") + p[i];
      return s.empty() ? std::string("root") : s;
    };
    if (!n.has_access) return;
    switch (n.kind) {
      case ScheduleNode::Kind::Loop: {
        DimSpec d;
        d.kind = DimSpec::Kind::Loop;
        d.iterator = n.iterator;
        d.loop_depth = n.loop_depth;
        d.lower = n.lower;
        d.upper = n.upper;
        d.step = n.step;
        cur.dims[n.dim] = d;
        collect(n.children.front(), cur, path, out);
        cur.dims[n.dim] = DimSpec{};
        return;
      }
      case ScheduleNode::Kind::Sequence:
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          DimSpec d;
          d.kind = DimSpec::Kind::Selector;
          d.selector = static_cast<std::int64_t>(k);
          d.branch_count = static_cast<std::int64_t>(n.children.size());
          cur.dims[n.dim] = d;
          auto p = path;
          p.push_back(std::to_string(k));
          collect(n.children[k], cur, p, out);
        }
        cur.dims[n.dim] = DimSpec{};
        return;
      case ScheduleNode::Kind::Guard: {
        std::size_t base = cur.guards.size();
        {
          auto p = path;
          p.push_back("then");
          cur.guards.insert(cur.guards.end(), n.conditions.begin(), n.conditions.end());
          collect(n.children[0], cur, p, out);
          cur.guards.resize(base);
        }
        // Complement of c1 && ... && cn as disjoint alternatives
        // (!c1), (c1 && !c2), ...; != splits into < and >.
        std::size_t alt = 0;
        for (std::size_t i = 0; i < n.conditions.size(); ++i) {
          const Comparison& c = n.conditions[i];
          std::vector<CmpOp> negs;
          switch (c.op) {
            case CmpOp::Lt: negs = {CmpOp::Ge}; break;
            case CmpOp::Le: negs = {CmpOp::Gt}; break;
            case CmpOp::Gt: negs = {CmpOp::Le}; break;
            case CmpOp::Ge: negs = {CmpOp::Lt}; break;
            case CmpOp::Eq: negs = {CmpOp::Lt, CmpOp::Gt}; break;
          }
          for (CmpOp op : negs) {
            cur.guards.insert(cur.guards.end(), n.conditions.begin(), n.conditions.begin() + i);
            cur.guards.push_back(negated(c, op));
            auto p = path;
            p.push_back("else" + std::to_string(alt++));
            collect(n.children[1], cur, p, out);
            cur.guards.resize(base);
          }
        }
        return;
      }
      case ScheduleNode::Kind::Access: {
        Piece p = cur;
        p.statement = n.statement;
        p.path = join_path(path);
        out.push_back(std::move(p));
        return;
      }
    }
  }

  ScheduleNode root_;
  std::size_t dims_ = 0;
  std::size_t max_depth_ = 0;
  std::vector<std::string> params_;
};

namespace poly_detail {

inline ScheduleNode build_block(const std::vector<Stmt>& body, std::size_t dim, std::size_t& dims);

inline ScheduleNode build_stmt(const Stmt& s, std::size_t dim, std::size_t& dims) {
  ScheduleNode n;
  if (const auto* f = std::get_if<ForStmt>(&s.node)) {
    n.kind = ScheduleNode::Kind::Loop;
    n.dim = dim;
    n.loop_depth = f->depth;
    n.iterator = f->iterator;
    n.lower = f->lower;
    n.upper = f->upper;
    n.step = f->step;
    n.children.push_back(build_block(f->body, dim + 1, dims));
  } else if (const auto* i = std::get_if<IfStmt>(&s.node)) {
    n.kind = ScheduleNode::Kind::Guard;
    n.conditions = i->conditions;
    n.children.push_back(build_block(i->then_body, dim, dims));
    n.children.push_back(build_block(i->else_body, dim, dims));
  } else {
    n.kind = ScheduleNode::Kind::Access;
    n.statement = std::get<AccessStmt>(s.node).id;
    dims = std::max(dims, dim);
  }
  n.has_access = n.kind == ScheduleNode::Kind::Access ||
                 std::any_of(n.children.begin(), n.children.end(),
                             [](const ScheduleNode& c) { return c.has_access; });
  return n;
}

inline ScheduleNode build_block(const std::vector<Stmt>& body, std::size_t dim, std::size_t& dims) {
  // A single statement needs no selector dimension.
  if (body.size() == 1) return build_stmt(body.front(), dim, dims);
  ScheduleNode n;
  n.kind = ScheduleNode::Kind::Sequence;
  n.dim = dim;
  for (const auto& s : body) n.children.push_back(build_stmt(s, dim + 1, dims));
  n.has_access = std::any_of(n.children.begin(), n.children.end(),
                             [](const ScheduleNode& c) { return c.has_access; });
  return n;
}

}  // namespace poly_detail

inline TimestampSpace build_timestamp_space(const ValidatedProgram& program) {
  TimestampSpace space;
  std::size_t dims = 0;
  space.root_ = poly_detail::build_block(program.program().body, 0, dims);
  space.dims_ = dims;
  space.max_depth_ = program.max_loop_depth();
  space.params_ = program.params();
  return space;
}

// ---------------------------------------------------------------------------
// Access map

/// A point of the data space: (array id, subscripts padded to the maximum
/// rank, [block index], [set index]).
struct DataPoint {
  std::int64_t array_id = 0;
  std::vector<std::int64_t> subscripts;
  std::optional<std::int64_t> block_index;
  std::optional<std::int64_t> set_index;

  friend auto operator<=>(const DataPoint&, const DataPoint&) = default;

  std::string str() const {
    std::string s = "(" + std::to_string(array_id);
    for (auto v : subscripts) s += ", " + std::to_string(v);
    if (set_index) s += ", s=" + std::to_string(*set_index);
    return s + ")";
  }
};

class AccessMap {
 public:
  std::int64_t block_size() const { return block_size_; }
  std::int64_t num_sets() const { return num_sets_; }
  std::size_t rank() const { return rank_; }
  std::size_t statement_count() const { return statements_.size(); }
  const StatementInfo& statement(std::size_t id) const { return statements_.at(id); }

  /// Data point touched by `statement` at the given iterator values.
  DataPoint at(std::size_t statement, std::span<const std::int64_t> params,
               std::span<const std::int64_t> iterators) const {
    std::vector<std::int64_t> key;
    encode(statement, params, iterators, key);
    DataPoint p;
    p.array_id = key[0];
    p.subscripts.assign(key.begin() + 1, key.begin() + 1 + static_cast<std::ptrdiff_t>(rank_));
    if (block_size_ > 1) p.block_index = p.subscripts.back();
    if (num_sets_ > 1) p.set_index = key.back();
    return p;
  }

  /// Flat fixed-width encoding of the data point, for hashing. Rank-deficient
  /// subscripts are padded with leading zeros so the last declared subscript
  /// always sits in the last position.
  void encode(std::size_t statement, std::span<const std::int64_t> params,
              std::span<const std::int64_t> iterators, std::vector<std::int64_t>& key) const {
    const StatementInfo& s = statements_[statement];
    key.assign(key_width(), 0);
    key[0] = static_cast<std::int64_t>(s.array_index);
    std::size_t offset = 1 + rank_ - s.subscripts.size();
    for (std::size_t k = 0; k < s.subscripts.size(); ++k)
      key[offset + k] = evaluate(s.subscripts[k], params, iterators);
    if (rank_ == 0) return;
    std::int64_t last = key[rank_];
    if (block_size_ > 1) key[rank_] = floor_div(last, block_size_);
    if (num_sets_ > 1) key[rank_ + 1] = floor_mod(last, num_sets_);
  }

  std::size_t key_width() const { return 1 + rank_ + (num_sets_ > 1 ? 1 : 0); }

  std::optional<DataPoint> evaluate_access(const TimestampSpace& space,
                                           std::span<const std::int64_t> point,
                                           std::span<const std::int64_t> params) const {
    auto loc = space.locate(point, params);
    if (!loc) return std::nullopt;
    return at(loc->statement, params, loc->iterators);
  }

 private:
  friend AccessMap build_access_map(const ValidatedProgram& program, std::int64_t block_size,
                                    std::int64_t num_sets);

  std::vector<StatementInfo> statements_;
  std::size_t rank_ = 0;
  std::int64_t block_size_ = 1;
  std::int64_t num_sets_ = 1;
};

inline AccessMap build_access_map(const ValidatedProgram& program, std::int64_t block_size = 1,
                                  std::int64_t num_sets = 1) {
  if (block_size < 1) throw std::invalid_argument("block size must be at least 1");
  if (num_sets < 1) throw std::invalid_argument("number of sets must be at least 1");
  AccessMap m;
  m.statements_ = program.statements();
  m.rank_ = program.max_rank();
  m.block_size_ = block_size;
  m.num_sets_ = num_sets;
  return m;
}

// ---------------------------------------------------------------------------
// Debug dump

inline FormulaExpr floor_div_formula(const FormulaExpr& num, std::int64_t d) {
  std::string p = render_plain(num), l = render_latex(num);
  return FormulaExpr::raw("floor((" + p + ")/" + std::to_string(d) + ")",
                          "\\left\\lfloor \\frac{" + l + "}{" + std::to_string(d) + "} \\right\\rfloor");
}

/// Converts a resolved DSL expression to a formula, replacing iterator
/// references (by loop depth) with the given formulas.
inline FormulaExpr to_formula(const Expr& e, const std::vector<std::string>& params,
                              const std::vector<FormulaExpr>& iterators) {
  switch (e.kind) {
    case Expr::Kind::Const: return FormulaExpr::number(e.value);
    case Expr::Kind::Var:
      if (e.ref.scope == VarRef::Scope::Iterator) return iterators.at(e.ref.index);
      return FormulaExpr::symbol(e.ref.scope == VarRef::Scope::Param ? params.at(e.ref.index) : e.name);
    case Expr::Kind::Neg: return FormulaExpr::number(-1) * to_formula(e.operands[0], params, iterators);
    case Expr::Kind::Add:
      return to_formula(e.operands[0], params, iterators) + to_formula(e.operands[1], params, iterators);
    case Expr::Kind::Sub:
      return to_formula(e.operands[0], params, iterators) - to_formula(e.operands[1], params, iterators);
    case Expr::Kind::Mul:
      return to_formula(e.operands[0], params, iterators) * to_formula(e.operands[1], params, iterators);
    case Expr::Kind::FloorDiv:
      return floor_div_formula(to_formula(e.operands[0], params, iterators),
                               dsl_detail::fold_constant(e.operands[1]).value_or(1));
  }
  return FormulaExpr::number(0);
}

namespace poly_detail {

inline bool normalized(const DimSpec& d) {
  auto lo = dsl_detail::fold_constant(d.lower);
  return d.step == 1 && lo && *lo == 0;
}

struct PieceRendering {
  std::vector<std::string> tuple;
  std::vector<std::string> constraints;
  std::vector<FormulaExpr> iterators;
};

inline PieceRendering render_piece(const Piece& p, const std::vector<std::string>& params,
                                   std::size_t max_depth) {
  PieceRendering r;
  r.iterators.assign(max_depth, FormulaExpr::number(0));
  for (const auto& d : p.dims) {
    switch (d.kind) {
      case DimSpec::Kind::Padding: r.tuple.push_back("0"); break;
      case DimSpec::Kind::Selector: r.tuple.push_back(std::to_string(d.selector)); break;
      case DimSpec::Kind::Loop: {
        std::string name = normalized(d) ? d.iterator : "o_" + d.iterator;
        r.tuple.push_back(name);
        FormulaExpr lo = to_formula(d.lower, params, r.iterators);
        FormulaExpr hi = to_formula(d.upper, params, r.iterators);
        FormulaExpr extent = simplify(hi - lo);
        std::string bound = d.step == 1 ? render_plain(extent)
                                        : "ceil((" + render_plain(extent) + ")/" +
                                              std::to_string(d.step) + ")";
        r.constraints.push_back("0 <= " + name + " < " + bound);
        r.iterators[d.loop_depth] =
            simplify(FormulaExpr::number(d.step) * FormulaExpr::symbol(name) + lo);
        break;
      }
    }
  }
  for (const auto& g : p.guards) {
    std::string op(to_string(g.op));
    if (g.op == CmpOp::Eq) op = "=";
    r.constraints.push_back(render_plain(simplify(to_formula(g.lhs, params, r.iterators))) + " " +
                            op + " " +
                            render_plain(simplify(to_formula(g.rhs, params, r.iterators))));
  }
  return r;
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

}  // namespace poly_detail

/// Text rendering of the space as constraint lists and of the map as
/// "branch-path : (ordinals) -> (tuple)" lines.
inline std::string dump(const ValidatedProgram& program, const TimestampSpace& space,
                        const AccessMap& map) {
  std::ostringstream os;
  const auto& params = program.params();
  os << "params: [" << poly_detail::join(params, ", ") << "]\n";
  os << "timestamp space (" << space.dimension() << " dims):\n";
  auto pieces = space.pieces();
  for (const auto& p : pieces) {
    auto r = poly_detail::render_piece(p, params, space.max_loop_depth());
    const auto& st = map.statement(p.statement);
    os << "  S" << p.statement << " [" << p.path << "] " << st.text << ": { ("
       << poly_detail::join(r.tuple, ", ") << ")";
    if (!r.constraints.empty()) os << " : " << poly_detail::join(r.constraints, " and ");
    os << " }\n";
  }
  os << "access map (rank " << map.rank() << ", block " << map.block_size() << ", sets "
     << map.num_sets() << "):\n";
  for (const auto& p : pieces) {
    auto r = poly_detail::render_piece(p, params, space.max_loop_depth());
    const auto& st = map.statement(p.statement);
    std::vector<std::string> out{std::to_string(st.array_index)};
    for (std::size_t k = st.subscripts.size(); k < map.rank(); ++k) out.push_back("0");
    std::optional<FormulaExpr> last;
    for (const auto& s : st.subscripts) {
      last = simplify(to_formula(s, params, r.iterators));
      out.push_back(render_plain(*last));
    }
    if (last && map.block_size() > 1) out.back() = render_plain(floor_div_formula(*last, map.block_size()));
    if (last && map.num_sets() > 1)
      out.push_back("(" + render_plain(*last) + ") mod " + std::to_string(map.num_sets()));
    os << "  [" << p.path << "] : (" << poly_detail::join(r.tuple, ", ") << ") -> ("
       << poly_detail::join(out, ", ") << ")\n";
  }
  return os.str();
}

}  // namespace dmd
