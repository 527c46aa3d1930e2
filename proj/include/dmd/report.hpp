#pragma once

// Analysis reports shared by the command-line tool and the playground
// service: one JSON document per run, plus a plain-text rendering of it.

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmd/symbolic.hpp"

namespace dmd {

using nlohmann::json;

inline json formula_json(const FormulaExpr& f) {
  return {{"plain", render_plain(f)}, {"latex", render_latex(f)}};
}

inline json diagnostics_json(const std::vector<Diagnostic>& ds) {
  json out = json::array();
  for (const auto& d : ds)
    out.push_back({{"category", d.category}, {"message", d.message}, {"start", d.span.begin}, {"end", d.span.end}});
  return out;
}

struct AnalysisOptions {
  std::int64_t block_size = 1;
  std::int64_t num_sets = 1;
  std::optional<ParamBinding> binding;  // set: exact analysis at this binding
  SymbolicConfig symbolic;
};

namespace report_detail {

inline json no_closed_form() {
  return {{"plain", "no closed form"}, {"latex", "\\text{no closed form}"}};
}

inline json quasi_json(const std::optional<QuasiPoly>& q, const std::vector<std::string>& params) {
  return q ? formula_json(q->to_formula(params)) : no_closed_form();
}

inline json program_json(const ValidatedProgram& p) {
  json arrays = json::array(), stmts = json::array();
  for (const auto& a : p.program().arrays) arrays.push_back(a.name);
  for (const auto& s : p.statements())
    stmts.push_back({{"id", s.id}, {"text", s.text}, {"loop_depth", s.loop_depth}});
  return {{"params", p.params()}, {"arrays", arrays}, {"statements", stmts}};
}

/// Name of each timestamp dimension as seen by each statement.
inline std::vector<std::vector<std::string>> dim_names(const TimestampSpace& space, std::size_t statements) {
  std::vector<std::vector<std::string>> out(statements);
  for (const auto& piece : space.pieces()) {
    auto& names = out[piece.statement];
    if (!names.empty()) continue;
    for (const auto& d : piece.dims)
      names.push_back(d.kind == DimSpec::Kind::Loop       ? d.iterator
                      : d.kind == DimSpec::Kind::Selector ? "selector"
                                                          : "padding");
  }
  return out;
}

inline json formula_number(std::uint64_t v) {
  return formula_json(FormulaExpr::number(static_cast<std::int64_t>(v)));
}

}  // namespace report_detail

inline json symbolic_report(const ValidatedProgram& program, const AnalysisOptions& opts,
                            const SymbolicDistribution& dist, const DMDFormula& dmd) {
  using namespace report_detail;
  auto space = build_timestamp_space(program);
  auto names = dim_names(space, program.statements().size());
  json groups = json::array();
  for (const auto& g : dist.groups) {
    const auto& dims = names.at(g.key.source);
    json j = {{"rd", quasi_json(g.rd, dist.params)},
              {"multiplicity", quasi_json(g.multiplicity, dist.params)},
              {"scaling", g.scaling},
              {"closed_form", g.closed_form},
              {"class",
               {{"source", g.key.source},
                {"pred", g.key.pred},
                {"carrier", g.key.carrier},
                {"carrier_dim", g.key.carrier < dims.size() ? dims[g.key.carrier] : "none"},
                {"region", g.region}}}};
    if (!g.note.empty()) j["note"] = g.note;
    if (!g.samples.empty()) {
      json samples = json::array();
      for (const auto& s : g.samples) {
        json gs = json::array();
        for (const auto& r : s.groups) gs.push_back({{"rd", r.rd}, {"count", r.count}});
        samples.push_back({{"binding", s.binding}, {"groups", gs}});
      }
      j["samples"] = samples;
    }
    groups.push_back(std::move(j));
  }
  json diagnostics = json::array();
  for (const auto& n : dist.notes) diagnostics.push_back({{"category", "note"}, {"message", n}});
  for (const auto& g : dist.groups) {
    if (!g.closed_form)
      diagnostics.push_back({{"category", "no-closed-form"},
                             {"message", "group S" + std::to_string(g.key.source) + " <- S" +
                                             std::to_string(g.key.pred) + " " + g.region +
                                             " is excluded from the DMD formula"}});
    else if (!g.scaling)
      diagnostics.push_back({{"category", "non-scaling"},
                             {"message", "group S" + std::to_string(g.key.source) + " <- S" +
                                             std::to_string(g.key.pred) + " " + g.region +
                                             " does not scale and is excluded from the DMD formula"}});
  }
  return {{"mode", "symbolic"},
          {"program", program_json(program)},
          {"config",
           {{"block_size", opts.block_size},
            {"num_sets", opts.num_sets},
            {"period", dist.period},
            {"degree", dist.degree},
            {"retries", opts.symbolic.retries},
            {"sample_base", dist.base},
            {"sample_bindings", dist.grid.size()},
            {"validation_bindings", dist.validation}}},
          {"dmd", formula_json(dmd.expr)},
          {"counts",
           {{"n_total", quasi_json(dist.n_total, dist.params)},
            {"n_warm", quasi_json(dist.n_warm, dist.params)},
            {"n_cold", quasi_json(dist.n_cold, dist.params)}}},
          {"groups", groups},
          {"diagnostics", diagnostics}};
}

inline json concrete_report(const ValidatedProgram& program, const AnalysisOptions& opts,
                            const ConcreteDistribution& dist) {
  using namespace report_detail;
  json groups = json::array();
  for (const auto& g : dist.groups)
    groups.push_back({{"rd", formula_number(g.rd)},
                      {"multiplicity", formula_number(g.count)},
                      {"scaling", true},
                      {"class", nullptr}});
  json dmd = {{"plain", std::to_string(dmd_numeric(dist))}, {"latex", std::to_string(dmd_numeric(dist))},
              {"value", dmd_numeric(dist)}};
  return {{"mode", "concrete"},
          {"program", program_json(program)},
          {"config",
           {{"block_size", opts.block_size}, {"num_sets", opts.num_sets}, {"binding", *opts.binding}}},
          {"dmd", dmd},
          {"counts",
           {{"n_total", formula_number(dist.n_total)},
            {"n_warm", formula_number(dist.n_warm)},
            {"n_cold", formula_number(dist.n_cold)}}},
          {"groups", groups},
          {"distribution", to_json(dist)},
          {"diagnostics", json::array()}};
}

/// Parses, validates and analyzes `source`. Throws DiagnosticError for
/// invalid programs and ResourceError / Cancelled from the analysis.
inline json analyze_source(std::string_view source, const AnalysisOptions& opts) {
  ValidatedProgram program = compile(source);
  if (opts.block_size < 1) throw std::invalid_argument("block size must be at least 1");
  if (opts.num_sets < 1) throw std::invalid_argument("number of sets must be at least 1");
  if (opts.binding) {
    auto space = build_timestamp_space(program);
    auto map = build_access_map(program, opts.block_size, opts.num_sets);
    auto params = bind_params(program, *opts.binding);
    return concrete_report(program, opts,
                           concrete_distribution(space, map, params, opts.symbolic.limits));
  }
  auto dist = analyze_symbolic(program, opts.block_size, opts.num_sets, opts.symbolic);
  return symbolic_report(program, opts, dist, assemble_dmd(dist));
}

/// Human-readable rendering of a report document.
inline std::string text_report(const json& r) {
  std::ostringstream os;
  const auto& params = r["program"]["params"];
  os << "parameters: ";
  if (params.empty()) os << "(none)";
  for (std::size_t i = 0; i < params.size(); ++i) os << (i ? ", " : "") << params[i].get<std::string>();
  os << "\n";
  const auto& stmts = r["program"]["statements"];
  for (const auto& s : stmts) os << "  S" << s["id"].get<std::size_t>() << ": " << s["text"].get<std::string>() << "\n";
  if (r["mode"] == "symbolic") {
    const auto& c = r["config"];
    os << "mode: symbolic, period " << c["period"] << ", degree " << c["degree"] << ", "
       << c["sample_bindings"] << " sample bindings, " << c["validation_bindings"].size() << " held out\n";
  } else {
    os << "mode: concrete at " << r["config"]["binding"].dump() << "\n";
  }
  os << "\nDMD   = " << r["dmd"]["plain"].get<std::string>() << "\n";
  os << "LaTeX : " << r["dmd"]["latex"].get<std::string>() << "\n\n";
  const auto& counts = r["counts"];
  os << "n_total = " << counts["n_total"]["plain"].get<std::string>() << "\n";
  os << "n_warm  = " << counts["n_warm"]["plain"].get<std::string>() << "\n";
  os << "n_cold  = " << counts["n_cold"]["plain"].get<std::string>() << "\n\n";
  os << "reuse groups:\n";
  if (r["groups"].empty()) os << "  (none)\n";
  for (const auto& g : r["groups"]) {
    os << "  ";
    if (!g["class"].is_null()) {
      const auto& k = g["class"];
      os << "[S" << k["source"] << " <- S" << k["pred"] << ", carrier " << k["carrier_dim"].get<std::string>()
         << ", " << k["region"].get<std::string>() << "] ";
    }
    os << "rd = " << g["rd"]["plain"].get<std::string>() << ", multiplicity = "
       << g["multiplicity"]["plain"].get<std::string>();
    if (g.contains("closed_form") && !g["closed_form"].get<bool>())
      os << "  (diagnostic: no closed form)";
    else if (!g["scaling"].get<bool>())
      os << "  (diagnostic: does not scale)";
    os << "\n";
  }
  if (!r["diagnostics"].empty()) {
    os << "\nnotes:\n";
    for (const auto& d : r["diagnostics"]) os << "  " << d["message"].get<std::string>() << "\n";
  }
  return os.str();
}

}  // namespace dmd
