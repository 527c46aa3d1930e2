#pragma once

// Exact reuse analysis at a concrete parameter binding.
//
// One forward pass over the enumerated trace. Each data point is interned to
// a dense id; a Fenwick tree over trace positions marks the most recent
// access of every element, so the number of distinct elements in a reuse
// window is a range sum.

#include <boost/functional/hash.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dmd/polyhedral.hpp"

namespace dmd {

namespace locality_detail {

/// Fenwick tree that grows by appending positions.
class GrowingFenwick {
 public:
  void push_back(int mark) {
    std::size_t i = tree_.size() + 1;
    std::size_t low = i & (~i + 1);
    std::int64_t v = mark + prefix(i - 1) - prefix(i - low);
    tree_.push_back(static_cast<std::int32_t>(v));
  }

  void add(std::size_t pos, int delta) {  // pos is 1-based
    for (std::size_t i = pos; i <= tree_.size(); i += i & (~i + 1)) tree_[i - 1] += delta;
  }

  std::int64_t prefix(std::size_t pos) const {
    std::int64_t s = 0;
    for (std::size_t i = pos; i > 0; i -= i & (~i + 1)) s += tree_[i - 1];
    return s;
  }

  void reserve(std::size_t n) { tree_.reserve(n); }

 private:
  std::vector<std::int32_t> tree_;
};

struct KeyHash {
  std::size_t operator()(const std::vector<std::int64_t>& k) const {
    return boost::hash_range(k.begin(), k.end());
  }
};

}  // namespace locality_detail

/// One access as seen by the streaming analysis. Spans are only valid for the
/// duration of the callback.
struct TraceEvent {
  std::uint64_t index = 0;  // 1-based position in the trace
  std::size_t statement = 0;
  std::uint32_t element = 0;  // dense id, in order of first touch
  std::span<const std::int64_t> point;
  std::span<const std::int64_t> trips;
  std::span<const std::int64_t> key;  // encoded data point
  bool warm = false;
  std::uint64_t ri = 0;
  std::uint64_t rd = 0;
  // Predecessor details, populated when warm and predecessor tracking is on.
  std::uint64_t pred_index = 0;
  std::size_t pred_statement = 0;
  std::span<const std::int64_t> pred_point;
  std::span<const std::int64_t> pred_trips;
};

struct StreamOptions {
  EnumerationLimits limits;
  bool track_predecessors = false;
};

struct StreamTotals {
  std::uint64_t n_total = 0;
  std::uint64_t distinct = 0;
};

/// Runs the single-pass analysis, invoking `on_event` for every access in
/// execution order.
template <class Callback>
StreamTotals analyze_stream(const TimestampSpace& space, const AccessMap& map,
                            std::span<const std::int64_t> params, Callback&& on_event,
                            const StreamOptions& options = {}) {
  using locality_detail::KeyHash;
  const std::size_t dims = space.dimension();
  std::unordered_map<std::vector<std::int64_t>, std::uint32_t, KeyHash> ids;
  std::vector<std::uint64_t> last;  // per element: 1-based index of last access
  std::vector<std::size_t> last_stmt;
  std::vector<std::int64_t> last_point, last_trips;  // flat, dims per element
  locality_detail::GrowingFenwick marks;
  std::vector<std::int64_t> key;
  std::vector<std::int64_t> pred_point(dims), pred_trips(dims);
  std::uint64_t t = 0;

  space.enumerate(
      params,
      [&](const VisitedPoint& v) {
        ++t;
        map.encode(v.statement, params, v.iterators, key);
        auto [it, inserted] = ids.try_emplace(key, static_cast<std::uint32_t>(ids.size()));
        std::uint32_t id = it->second;
        TraceEvent ev;
        ev.index = t;
        ev.statement = v.statement;
        ev.element = id;
        ev.point = v.point;
        ev.trips = v.trips;
        ev.key = key;
        if (inserted) {
          last.push_back(0);
          if (options.track_predecessors) {
            last_stmt.push_back(0);
            last_point.resize(last_point.size() + dims);
            last_trips.resize(last_trips.size() + dims);
          }
        }
        std::uint64_t p = last[id];
        if (p != 0) {
          ev.warm = true;
          ev.ri = t - p;
          ev.rd = static_cast<std::uint64_t>(marks.prefix(t - 1) - marks.prefix(p)) + 1;
          marks.add(p, -1);
          if (options.track_predecessors) {
            ev.pred_index = p;
            ev.pred_statement = last_stmt[id];
            std::copy_n(last_point.begin() + static_cast<std::ptrdiff_t>(id * dims), dims,
                        pred_point.begin());
            std::copy_n(last_trips.begin() + static_cast<std::ptrdiff_t>(id * dims), dims,
                        pred_trips.begin());
            ev.pred_point = pred_point;
            ev.pred_trips = pred_trips;
          }
        }
        marks.push_back(1);
        last[id] = t;
        if (options.track_predecessors) {
          last_stmt[id] = v.statement;
          std::copy(v.point.begin(), v.point.end(),
                    last_point.begin() + static_cast<std::ptrdiff_t>(id * dims));
          std::copy(v.trips.begin(), v.trips.end(),
                    last_trips.begin() + static_cast<std::ptrdiff_t>(id * dims));
        }
        on_event(static_cast<const TraceEvent&>(ev));
      },
      options.limits);
  return {t, ids.size()};
}

struct ReuseRecord {
  std::vector<std::int64_t> timestamp;
  std::size_t statement = 0;
  DataPoint element;
  std::optional<std::vector<std::int64_t>> predecessor;
  std::optional<std::uint64_t> ri;
  std::optional<std::uint64_t> rd;
};

struct RdGroup {
  std::uint64_t rd = 0;
  std::uint64_t count = 0;
  friend bool operator==(const RdGroup&, const RdGroup&) = default;
};

struct ConcreteDistribution {
  std::vector<RdGroup> groups;     // ascending rd
  std::vector<RdGroup> ri_groups;  // same layout, keyed by reuse interval
  std::uint64_t n_total = 0;
  std::uint64_t n_warm = 0;
  std::uint64_t n_cold = 0;

  friend bool operator==(const ConcreteDistribution&, const ConcreteDistribution&) = default;
};

/// Accumulates warm events into a distribution.
class DistributionBuilder {
 public:
  void add(const TraceEvent& e) {
    ++n_total_;
    if (!e.warm) return;
    ++rd_[e.rd];
    ++ri_[e.ri];
  }

  ConcreteDistribution finish() const {
    ConcreteDistribution d;
    for (auto [v, c] : rd_) d.groups.push_back({v, c});
    for (auto [v, c] : ri_) d.ri_groups.push_back({v, c});
    d.n_total = n_total_;
    for (const auto& g : d.groups) d.n_warm += g.count;
    d.n_cold = d.n_total - d.n_warm;
    return d;
  }

 private:
  std::map<std::uint64_t, std::uint64_t> rd_, ri_;
  std::uint64_t n_total_ = 0;
};

inline ConcreteDistribution concrete_distribution(const TimestampSpace& space, const AccessMap& map,
                                                  std::span<const std::int64_t> params,
                                                  const EnumerationLimits& limits = {}) {
  DistributionBuilder b;
  StreamOptions opts;
  opts.limits = limits;
  analyze_stream(space, map, params, [&](const TraceEvent& e) { b.add(e); }, opts);
  return b.finish();
}

struct ConcreteAnalysis {
  std::vector<ReuseRecord> records;
  ConcreteDistribution distribution;
};

/// Full per-access records plus the grouped distribution.
inline ConcreteAnalysis analyze_concrete(const ValidatedProgram& program, const ParamBinding& binding,
                                         std::int64_t block_size = 1, std::int64_t num_sets = 1,
                                         const EnumerationLimits& limits = {}) {
  auto params = bind_params(program, binding);
  auto space = build_timestamp_space(program);
  auto map = build_access_map(program, block_size, num_sets);
  ConcreteAnalysis out;
  DistributionBuilder b;
  StreamOptions opts;
  opts.limits = limits;
  opts.track_predecessors = true;
  analyze_stream(
      space, map, params,
      [&](const TraceEvent& e) {
        b.add(e);
        ReuseRecord r;
        r.timestamp.assign(e.point.begin(), e.point.end());
        r.statement = e.statement;
        r.element.array_id = e.key[0];
        r.element.subscripts.assign(e.key.begin() + 1,
                                    e.key.begin() + 1 + static_cast<std::ptrdiff_t>(map.rank()));
        if (map.block_size() > 1 && map.rank() > 0) r.element.block_index = r.element.subscripts.back();
        if (map.num_sets() > 1) r.element.set_index = e.key.back();
        if (e.warm) {
          r.predecessor.emplace(e.pred_point.begin(), e.pred_point.end());
          r.ri = e.ri;
          r.rd = e.rd;
        }
        out.records.push_back(std::move(r));
      },
      opts);
  out.distribution = b.finish();
  return out;
}

inline double dmd_numeric(const ConcreteDistribution& d) {
  double s = static_cast<double>(d.n_cold);
  for (const auto& g : d.groups) s += static_cast<double>(g.count) * std::sqrt(static_cast<double>(g.rd));
  return s;
}

inline nlohmann::json to_json(const ConcreteDistribution& d) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : d.groups) groups.push_back({{"rd", g.rd}, {"count", g.count}});
  return {{"n_total", d.n_total},
          {"n_warm", d.n_warm},
          {"n_cold", d.n_cold},
          {"groups", groups},
          {"dmd", dmd_numeric(d)}};
}

}  // namespace dmd
