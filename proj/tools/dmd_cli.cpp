// dmd-cli: reuse-distance and data-movement-distance analysis of affine loop
// programs.
//
// Exit status: 0 success, 1 invalid program (diagnostics on stderr),
// 2 I/O, usage, resource or timeout errors.

#include <CLI11.hpp>

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include "dmd/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalidProgram = 1;
constexpr int kFailure = 2;

bool read_input(const std::string& path, std::string& out) {
  if (path.empty() || path == "-") {
    out.assign(std::istreambuf_iterator<char>(std::cin), {});
    return true;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  out.assign(std::istreambuf_iterator<char>(in), {});
  return !in.bad();
}

// Line and column (1-based) of a byte offset, for diagnostics.
std::pair<std::size_t, std::size_t> line_col(const std::string& src, std::size_t offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < offset && i < src.size(); ++i) {
    if (src[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reuse distance and data movement distance of affine loop programs"};
  app.set_version_flag("--version", "dmd-cli 1.0");

  std::string input;
  bool as_json = false;
  bool dump = false;
  std::int64_t block_size = 1;
  std::int64_t num_sets = 1;
  std::vector<std::string> params;
  std::optional<std::int64_t> sample_base;
  unsigned degree = 0;
  unsigned retries = 1;
  unsigned validation_count = 2;
  std::vector<std::string> validate_at;
  std::optional<std::int64_t> period;
  double timeout_seconds = 0;
  std::string max_operations, approximation_method;

  app.add_option("-i,--input", input, "DSL source file ('-' or omitted: stdin)");
  app.add_flag("--json", as_json, "Print a single JSON document");
  app.add_flag("--dump", dump, "Print the timestamp space and access map, then exit");
  app.add_option("--block-size", block_size, "Elements per cache block")->check(CLI::PositiveNumber);
  app.add_option("--num-sets", num_sets, "Number of cache sets")->check(CLI::PositiveNumber);
  app.add_option("--param", params, "Bind a parameter (name=value); switches to exact analysis")
      ->allow_extra_args(false);
  app.add_option("--sample-base", sample_base, "Smallest parameter value on the sample grid")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--degree", degree, "Polynomial degree bound (0: loop depth)");
  app.add_option("--retries", retries, "Extra degrees tried when a fit fails");
  app.add_option("--validation-count", validation_count, "Generated held-out bindings");
  app.add_option("--validate-at", validate_at, "Extra held-out binding, comma-separated in parameter order")
      ->allow_extra_args(false);
  app.add_option("--period", period, "Force the quasi-polynomial period")->check(CLI::PositiveNumber);
  app.add_option("--timeout-seconds", timeout_seconds, "Abandon the analysis after this many seconds")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--max-operations", max_operations, "Accepted for compatibility; ignored");
  app.add_option("--approximation-method", approximation_method, "Accepted for compatibility; ignored");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kFailure;
  }

  if (!max_operations.empty())
    std::cerr << "warning: --max-operations is ignored by the enumeration backend\n";
  if (!approximation_method.empty())
    std::cerr << "warning: --approximation-method is ignored by the enumeration backend\n";

  std::string source;
  if (!read_input(input, source)) {
    std::cerr << "error: cannot read '" << input << "'\n";
    return kFailure;
  }

  dmd::AnalysisOptions opts;
  opts.block_size = block_size;
  opts.num_sets = num_sets;
  opts.symbolic.sample_base = sample_base;
  opts.symbolic.degree = degree;
  opts.symbolic.retries = retries;
  opts.symbolic.validation_count = validation_count;
  opts.symbolic.period = period;
  for (const auto& p : params) {
    auto eq = p.find('=');
    std::int64_t value = 0;
    try {
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument(p);
      std::size_t used = 0;
      value = std::stoll(p.substr(eq + 1), &used);
      if (used != p.size() - eq - 1) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      std::cerr << "error: --param expects name=value, got '" << p << "'\n";
      return kFailure;
    }
    if (!opts.binding) opts.binding.emplace();
    (*opts.binding)[p.substr(0, eq)] = value;
  }
  for (const auto& v : validate_at) {
    std::vector<std::int64_t> b;
    std::stringstream ss(v);
    std::string item;
    try {
      while (std::getline(ss, item, ',')) b.push_back(std::stoll(item));
    } catch (const std::exception&) {
      std::cerr << "error: --validate-at expects comma-separated integers, got '" << v << "'\n";
      return kFailure;
    }
    opts.symbolic.validation_bindings.push_back(std::move(b));
  }

  std::stop_source stop;
  opts.symbolic.limits.stop = stop.get_token();
  std::jthread timer;
  if (timeout_seconds > 0) {
    timer = std::jthread([&stop, timeout_seconds](std::stop_token st) {
      std::mutex m;
      std::condition_variable_any cv;
      std::unique_lock lk(m);
      if (!cv.wait_for(lk, st, std::chrono::duration<double>(timeout_seconds), [] { return false; }) &&
          !st.stop_requested())
        stop.request_stop();
    });
  }

  try {
    if (dump) {
      auto program = dmd::compile(source);
      auto space = dmd::build_timestamp_space(program);
      auto map = dmd::build_access_map(program, block_size, num_sets);
      std::cout << dmd::dump(program, space, map);
      return kOk;
    }
    auto report = dmd::analyze_source(source, opts);
    if (as_json)
      std::cout << report.dump(2) << "\n";
    else
      std::cout << dmd::text_report(report);
    return kOk;
  } catch (const dmd::DiagnosticError& e) {
    for (const auto& d : e.diagnostics()) {
      auto [line, col] = line_col(source, d.span.begin);
      std::cerr << (input.empty() ? "<stdin>" : input) << ":" << line << ":" << col << ": error: " << d.message
                << " [" << d.category << "]\n";
    }
    return kInvalidProgram;
  } catch (const dmd::Cancelled&) {
    std::cerr << "error: analysis timed out after " << timeout_seconds << " s\n";
    return kFailure;
  } catch (const dmd::ResourceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
