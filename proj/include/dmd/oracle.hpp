#pragma once

// Reference simulators over an explicit trace. Deliberately naive: an LRU
// stack scanned linearly, and a bounded LRU cache. Used to cross-check the
// reuse analysis, never by it.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

namespace dmd::oracle {

/// 1-based depth of each access in the LRU stack (most recent on top), or
/// nullopt on first touch.
template <class T>
std::vector<std::optional<std::uint64_t>> stack_distances(const std::vector<T>& trace) {
  std::vector<T> stack;  // back() is most recent
  std::vector<std::optional<std::uint64_t>> out;
  out.reserve(trace.size());
  for (const T& x : trace) {
    auto it = std::find(stack.rbegin(), stack.rend(), x);
    if (it == stack.rend()) {
      out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(static_cast<std::uint64_t>(it - stack.rbegin()) + 1);
      stack.erase(std::next(it).base());
    }
    stack.push_back(x);
  }
  return out;
}

/// Distinct elements strictly between an access and its previous touch,
/// found by scanning the window directly.
template <class T>
std::vector<std::optional<std::uint64_t>> exclusive_distances(const std::vector<T>& trace) {
  std::vector<std::optional<std::uint64_t>> out(trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    std::set<T> seen;
    for (std::size_t p = t; p-- > 0;) {
      if (trace[p] == trace[t]) {
        out[t] = seen.size();
        break;
      }
      seen.insert(trace[p]);
    }
  }
  return out;
}

/// Hits of a fully associative LRU cache holding `capacity` elements.
template <class T>
std::uint64_t lru_hits(const std::vector<T>& trace, std::size_t capacity) {
  std::vector<T> lines;  // front is least recently used
  std::uint64_t hits = 0;
  for (const T& x : trace) {
    auto it = std::find(lines.begin(), lines.end(), x);
    if (it != lines.end()) {
      ++hits;
      lines.erase(it);
    } else if (lines.size() == capacity && capacity > 0) {
      lines.erase(lines.begin());
    }
    if (capacity > 0) lines.push_back(x);
  }
  return hits;
}

/// Number of distinct elements in the trace.
template <class T>
std::uint64_t footprint(const std::vector<T>& trace) {
  return std::set<T>(trace.begin(), trace.end()).size();
}

}  // namespace dmd::oracle
