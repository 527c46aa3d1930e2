#pragma once

// Shared helpers for the test suites: corpus loading, a direct AST
// interpreter that produces access traces without the polyhedral lowering,
// and a generator of random affine loop nests.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmd/locality.hpp"

namespace dmd::testing {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CorpusEntry {
  std::string name;
  std::string source;
};

inline void PrintTo(const CorpusEntry& c, std::ostream* os) { *os << c.name; }

inline std::vector<CorpusEntry> corpus() {
  std::vector<CorpusEntry> out;
  for (const auto& e : std::filesystem::directory_iterator(DMD_CORPUS_DIR))
    if (e.path().extension() == ".dsl") out.push_back({e.path().stem().string(), read_file(e.path())});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

inline std::string corpus_source(const std::string& name) {
  return read_file(std::filesystem::path(DMD_CORPUS_DIR) / (name + ".dsl"));
}

struct TraceEntry {
  std::size_t statement;
  std::vector<std::int64_t> iterators;
  DataPoint element;
};

/// Executes the program's loop structure directly: iterate over iterator
/// values, evaluate guards, descend blocks in order.
class Interpreter {
 public:
  Interpreter(const ValidatedProgram& p, std::vector<std::int64_t> params, std::int64_t block = 1,
              std::int64_t sets = 1)
      : prog_(p), params_(std::move(params)), block_(block), sets_(sets), iters_(p.max_loop_depth(), 0) {}

  std::vector<TraceEntry> run() {
    out_.clear();
    block(prog_.program().body);
    return out_;
  }

 private:
  void block(const std::vector<Stmt>& body) {
    for (const auto& s : body) stmt(s);
  }

  void stmt(const Stmt& s) {
    if (const auto* f = std::get_if<ForStmt>(&s.node)) {
      std::int64_t lo = evaluate(f->lower, params_, iters_);
      std::int64_t hi = evaluate(f->upper, params_, iters_);
      for (std::int64_t v = lo; v < hi; v += f->step) {
        iters_[f->depth] = v;
        block(f->body);
      }
    } else if (const auto* c = std::get_if<IfStmt>(&s.node)) {
      bool ok = true;
      for (const auto& cond : c->conditions) {
        std::int64_t l = evaluate(cond.lhs, params_, iters_), r = evaluate(cond.rhs, params_, iters_);
        switch (cond.op) {
          case CmpOp::Lt: ok = ok && l < r; break;
          case CmpOp::Le: ok = ok && l <= r; break;
          case CmpOp::Eq: ok = ok && l == r; break;
          case CmpOp::Ge: ok = ok && l >= r; break;
          case CmpOp::Gt: ok = ok && l > r; break;
        }
      }
      block(ok ? c->then_body : c->else_body);
    } else {
      const auto& a = std::get<AccessStmt>(s.node);
      DataPoint d;
      const auto& arrays = prog_.program().arrays;
      d.array_id = std::find_if(arrays.begin(), arrays.end(), [&](const auto& x) { return x.name == a.array; }) -
                   arrays.begin();
      d.subscripts.assign(prog_.max_rank() - a.subscripts.size(), 0);
      for (const auto& e : a.subscripts) d.subscripts.push_back(evaluate(e, params_, iters_));
      std::int64_t last = d.subscripts.back();
      if (block_ > 1) {
        d.subscripts.back() = floor_div(last, block_);
        d.block_index = d.subscripts.back();
      }
      if (sets_ > 1) d.set_index = floor_mod(last, sets_);
      std::vector<std::int64_t> it(iters_.begin(), iters_.end());
      out_.push_back({a.id, std::move(it), std::move(d)});
    }
  }

  const ValidatedProgram& prog_;
  std::vector<std::int64_t> params_;
  std::int64_t block_, sets_;
  std::vector<std::int64_t> iters_;
  std::vector<TraceEntry> out_;
};

inline std::vector<DataPoint> elements(const std::vector<TraceEntry>& t) {
  std::vector<DataPoint> out;
  for (const auto& e : t) out.push_back(e.element);
  return out;
}

/// Applies blocking and set tagging to an unblocked data point.
inline DataPoint transform(DataPoint d, std::int64_t block, std::int64_t sets) {
  std::int64_t last = d.subscripts.back();
  if (block > 1) {
    d.subscripts.back() = floor_div(last, block);
    d.block_index = d.subscripts.back();
  }
  if (sets > 1) d.set_index = floor_mod(last, sets);
  return d;
}

/// Trace of the lowered program: enumerated timestamps mapped through the
/// access map.
inline std::vector<DataPoint> lowered_trace(const ValidatedProgram& p, std::span<const std::int64_t> params,
                                            std::int64_t block = 1, std::int64_t sets = 1) {
  auto space = build_timestamp_space(p);
  auto map = build_access_map(p, block, sets);
  std::vector<DataPoint> out;
  space.enumerate(params, [&](const VisitedPoint& v) { out.push_back(map.at(v.statement, params, v.iterators)); });
  return out;
}

/// Small bindings: every parameter set to the same value in turn.
inline std::vector<std::vector<std::int64_t>> small_bindings(const ValidatedProgram& p,
                                                             std::vector<std::int64_t> values = {3, 5, 7}) {
  std::vector<std::vector<std::int64_t>> out;
  const std::size_t n = p.params().size();
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::vector<std::int64_t> b(n);
    for (std::size_t k = 0; k < n; ++k) b[k] = values[(v + k) % values.size()];
    out.push_back(b);
    if (n == 0) break;
  }
  return out;
}

/// Random affine loop nest of depth up to `max_depth`, as DSL text.
class RandomProgram {
 public:
  explicit RandomProgram(std::uint32_t seed) : rng_(seed) {}

  std::string generate(int max_depth = 4) {
    iters_.clear();
    os_.str("");
    nparams_ = pick(1, 2);
    narrays_ = pick(1, 3);
    os_ << "params " << (nparams_ == 1 ? "N" : "N, M") << ";\n";
    for (int a = 0; a < narrays_; ++a) {
      ranks_[a] = pick(1, 2);
      os_ << "array " << array_name(a) << "[N" << (ranks_[a] == 2 ? ", N" : "") << "];\n";
    }
    int depth = pick(1, max_depth);
    nest(depth, 0);
    return os_.str();
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  static std::string array_name(int a) { return std::string(1, static_cast<char>('A' + a)); }
  std::string param() { return nparams_ == 2 && pick(0, 1) ? "M" : "N"; }

  std::string affine() {
    std::string e;
    if (!iters_.empty() && pick(0, 4) > 0) {
      e = iters_[static_cast<std::size_t>(pick(0, static_cast<int>(iters_.size()) - 1))];
      int c = pick(0, 5);
      if (c == 4) e = "2 * " + e;
      if (c == 5 && iters_.size() > 1) e += " + " + iters_.front();
    } else {
      e = std::to_string(pick(0, 2));
    }
    int off = pick(-1, 2);
    if (off > 0) e += " + " + std::to_string(off);
    if (off < 0) e += " - 1";
    if (pick(0, 9) == 0) e = "(" + e + ") / 2";
    return e;
  }

  void access(int indent) {
    static const char* kinds[] = {"read", "write", "update"};
    int a = pick(0, narrays_ - 1);
    os_ << std::string(indent, ' ') << kinds[pick(0, 2)] << " " << array_name(a) << "[" << affine();
    if (ranks_[a] == 2) os_ << ", " << affine();
    os_ << "];\n";
  }

  void nest(int depth, int indent) {
    std::string it = std::string(1, static_cast<char>('i' + iters_.size()));
    std::string lower = "0", upper = param();
    if (!iters_.empty() && pick(0, 3) == 0) upper = iters_.back() + " + 1";  // triangular
    if (pick(0, 4) == 0) lower = "1";
    os_ << std::string(indent, ' ') << "for " << it << " in " << lower << " .. " << upper;
    if (pick(0, 4) == 0) os_ << " step 2";
    os_ << " {\n";
    iters_.push_back(it);
    int stmts = pick(1, 3);
    bool nested = false;
    for (int s = 0; s < stmts; ++s) {
      if (depth > 1 && !nested && (s == stmts - 1 || pick(0, 1))) {
        nest(depth - 1, indent + 2);
        nested = true;
      } else if (pick(0, 5) == 0) {
        os_ << std::string(indent + 2, ' ') << "if " << it << " " << (pick(0, 1) ? "<" : "==") << " "
            << affine() << " {\n";
        access(indent + 4);
        os_ << std::string(indent + 2, ' ') << "} else {\n";
        access(indent + 4);
        os_ << std::string(indent + 2, ' ') << "}\n";
      } else {
        access(indent + 2);
      }
    }
    iters_.pop_back();
    os_ << std::string(indent, ' ') << "}\n";
  }

  std::mt19937 rng_;
  std::ostringstream os_;
  std::vector<std::string> iters_;
  int nparams_ = 1;
  int narrays_ = 1;
  std::map<int, int> ranks_;
};

}  // namespace dmd::testing
