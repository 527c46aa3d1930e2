#pragma once

// Asynchronous analysis tasks behind a small HTTP API.
//
//   POST /api/tasks       {"source": "...", "config": {"block_size": 1, "num_sets": 1}}
//                         -> 202 {"id": "..."} | 400 | 429
//   GET  /api/tasks/{id}  -> 200 {"state": ..., "result"?: ..., "error"?: ...} | 404
//
// Jobs run on a fixed pool of workers. A monitor thread times out overdue
// jobs (requesting cooperative cancellation) and expires finished tasks.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <stop_token>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dmd/report.hpp"

namespace dmd::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

enum class TaskState { Queued, Running, Done, Failed, TimedOut };

inline const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::Queued: return "queued";
    case TaskState::Running: return "running";
    case TaskState::Done: return "done";
    case TaskState::Failed: return "failed";
    case TaskState::TimedOut: return "timed_out";
  }
  return "unknown";
}

struct TaskConfig {
  std::int64_t block_size = 1;
  std::int64_t num_sets = 1;
};

using Job = std::function<json(const std::string& source, const TaskConfig& config, std::stop_token stop)>;

/// Runs the same analysis as the command-line tool.
inline json analysis_job(const std::string& source, const TaskConfig& config, std::stop_token stop) {
  AnalysisOptions opts;
  opts.block_size = config.block_size;
  opts.num_sets = config.num_sets;
  opts.symbolic.limits.stop = stop;
  return analyze_source(source, opts);
}

struct ManagerOptions {
  std::size_t concurrency = 4;
  std::chrono::milliseconds timeout{30'000};
  std::size_t queue_capacity = 64;
  std::chrono::milliseconds retention{600'000};
  std::chrono::milliseconds monitor_interval{20};
};

class TaskManager {
 public:
  explicit TaskManager(ManagerOptions options = {}, Job job = analysis_job)
      : options_(options), job_(std::move(job)), rng_(std::random_device{}()) {
    if (options_.concurrency == 0) options_.concurrency = 1;
    for (std::size_t i = 0; i < options_.concurrency; ++i)
      workers_.emplace_back([this](std::stop_token st) { work(st); });
    monitor_ = std::jthread([this](std::stop_token st) { monitor(st); });
  }

  ~TaskManager() {
    {
      std::lock_guard lock(mu_);
      shutting_down_ = true;
      for (auto& [id, t] : tasks_) t.stop.request_stop();
    }
    cv_.notify_all();
    for (auto& w : workers_) w.request_stop();
    cv_.notify_all();
    monitor_.request_stop();
  }

  TaskManager(const TaskManager&) = delete;
  TaskManager& operator=(const TaskManager&) = delete;

  /// New task id, or nullopt when the queue is full.
  std::optional<std::string> submit(std::string source, TaskConfig config) {
    std::lock_guard lock(mu_);
    if (queue_.size() >= options_.queue_capacity) return std::nullopt;
    std::string id = new_id();
    Task& t = tasks_[id];
    t.source = std::move(source);
    t.config = config;
    t.submitted_at = Clock::now();
    queue_.push_back(id);
    cv_.notify_one();
    return id;
  }

  std::optional<json> status(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(id);
    if (it == tasks_.end()) return std::nullopt;
    const Task& t = it->second;
    json j = {{"id", id}, {"state", to_string(t.state)}};
    if (t.result) j["result"] = *t.result;
    if (t.error) j["error"] = *t.error;
    return j;
  }

  std::optional<TaskState> state(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = tasks_.find(id);
    if (it == tasks_.end()) return std::nullopt;
    return it->second.state;
  }

  std::size_t running() const {
    std::lock_guard lock(mu_);
    return running_;
  }

  /// Highest number of simultaneously running tasks observed.
  std::size_t peak_running() const {
    std::lock_guard lock(mu_);
    return peak_running_;
  }

  const ManagerOptions& options() const { return options_; }

 private:
  struct Task {
    std::string source;
    TaskConfig config;
    TaskState state = TaskState::Queued;
    std::optional<json> result;
    std::optional<json> error;
    Clock::time_point submitted_at, started_at, finished_at;
    std::stop_source stop;
  };

  std::string new_id() {
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (int half = 0; half < 2; ++half) {
      std::uint64_t v = rng_();
      for (int i = 0; i < 16; ++i, v >>= 4) id += hex[v & 15];
    }
    return tasks_.count(id) ? new_id() : id;
  }

  void work(std::stop_token st) {
    for (;;) {
      std::string id;
      std::string source;
      TaskConfig config;
      std::stop_token job_stop;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return st.stop_requested() || shutting_down_ || !queue_.empty(); });
        if (st.stop_requested() || shutting_down_) return;
        id = queue_.front();
        queue_.pop_front();
        auto it = tasks_.find(id);
        if (it == tasks_.end()) continue;
        Task& t = it->second;
        t.state = TaskState::Running;
        t.started_at = Clock::now();
        source = t.source;
        config = t.config;
        job_stop = t.stop.get_token();
        peak_running_ = std::max(peak_running_, ++running_);
      }

      std::optional<json> result, error;
      try {
        result = job_(source, config, job_stop);
      } catch (const DiagnosticError& e) {
        error = json{{"kind", "diagnostics"}, {"diagnostics", diagnostics_json(e.diagnostics())}};
      } catch (const Cancelled&) {
        error = json{{"kind", "cancelled"}, {"message", "analysis cancelled"}};
      } catch (const std::exception& e) {
        error = json{{"kind", "error"}, {"message", e.what()}};
      } catch (...) {
        error = json{{"kind", "error"}, {"message", "unknown failure"}};
      }

      std::lock_guard lock(mu_);
      --running_;
      auto it = tasks_.find(id);
      if (it == tasks_.end()) continue;
      Task& t = it->second;
      if (t.state != TaskState::Running) continue;  // timed out meanwhile
      t.finished_at = Clock::now();
      if (result) {
        t.state = TaskState::Done;
        t.result = std::move(result);
      } else {
        t.state = TaskState::Failed;
        t.error = std::move(error);
      }
    }
  }

  void monitor(std::stop_token st) {
    std::mutex sleep_mu;
    std::condition_variable_any sleep_cv;
    while (!st.stop_requested()) {
      {
        std::unique_lock lk(sleep_mu);
        sleep_cv.wait_for(lk, st, options_.monitor_interval, [] { return false; });
      }
      auto now = Clock::now();
      std::lock_guard lock(mu_);
      for (auto it = tasks_.begin(); it != tasks_.end();) {
        Task& t = it->second;
        if (t.state == TaskState::Running && now - t.started_at > options_.timeout) {
          t.state = TaskState::TimedOut;
          t.finished_at = now;
          t.error = json{{"kind", "timeout"},
                         {"message", "analysis exceeded " + std::to_string(options_.timeout.count()) + " ms"}};
          t.stop.request_stop();
        }
        bool finished = t.state != TaskState::Queued && t.state != TaskState::Running;
        if (finished && now - t.finished_at > options_.retention)
          it = tasks_.erase(it);
        else
          ++it;
      }
    }
  }

  ManagerOptions options_;
  Job job_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  std::unordered_map<std::string, Task> tasks_;
  std::size_t running_ = 0;
  std::size_t peak_running_ = 0;
  bool shutting_down_ = false;
  std::mt19937_64 rng_;
  std::vector<std::jthread> workers_;
  std::jthread monitor_;
};

/// Parses a submission body; nullopt with `why` set when malformed.
inline std::optional<std::pair<std::string, TaskConfig>> parse_submission(const std::string& body,
                                                                          std::string& why) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    why = "body must be a JSON object";
    return std::nullopt;
  }
  if (!j.contains("source") || !j["source"].is_string()) {
    why = "missing string field 'source'";
    return std::nullopt;
  }
  TaskConfig cfg;
  if (j.contains("config")) {
    const json& c = j["config"];
    if (!c.is_object()) {
      why = "'config' must be an object";
      return std::nullopt;
    }
    for (auto [key, field] : {std::pair{"block_size", &cfg.block_size}, std::pair{"num_sets", &cfg.num_sets}}) {
      if (!c.contains(key)) continue;
      if (!c[key].is_number_integer() || c[key].get<std::int64_t>() < 1) {
        why = std::string("'") + key + "' must be a positive integer";
        return std::nullopt;
      }
      *field = c[key].get<std::int64_t>();
    }
  }
  return std::pair{j["source"].get<std::string>(), cfg};
}

/// Registers the task API (and optionally a static file mount) on `server`.
inline void install_routes(httplib::Server& server, TaskManager& tasks, const std::string& static_dir = {}) {
  server.Post("/api/tasks", [&tasks](const httplib::Request& req, httplib::Response& res) {
    std::string why;
    auto sub = parse_submission(req.body, why);
    if (!sub) {
      res.status = 400;
      res.set_content(json{{"error", why}}.dump(), "application/json");
      return;
    }
    auto id = tasks.submit(std::move(sub->first), sub->second);
    if (!id) {
      res.status = 429;
      res.set_content(json{{"error", "task queue is full"}}.dump(), "application/json");
      return;
    }
    res.status = 202;
    res.set_content(json{{"id", *id}}.dump(), "application/json");
  });
  server.Get(R"(/api/tasks/([^/]+))", [&tasks](const httplib::Request& req, httplib::Response& res) {
    auto st = tasks.status(req.matches[1]);
    if (!st) {
      res.status = 404;
      res.set_content(json{{"error", "unknown task"}}.dump(), "application/json");
      return;
    }
    res.status = 200;
    res.set_content(st->dump(), "application/json");
  });
  server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"ok":true})", "application/json");
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir);
}

}  // namespace dmd::service
