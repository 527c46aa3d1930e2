// dmd-playground: HTTP service running analyses as asynchronous tasks.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "dmd/service.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analysis playground service"};
  std::string host = "0.0.0.0";
  int port = 3000;
  std::size_t concurrency = 4;
  double timeout_seconds = 30;
  std::size_t queue_size = 64;
  double retention_seconds = 600;
  std::string static_dir;

  app.add_option("--host", host, "Address to bind");
  app.add_option("--port", port, "Port to listen on")->check(CLI::Range(0, 65535));
  app.add_option("--concurrency", concurrency, "Maximum simultaneously running jobs")->check(CLI::PositiveNumber);
  app.add_option("--timeout-seconds", timeout_seconds, "Per-job time limit")->check(CLI::PositiveNumber);
  app.add_option("--queue-size", queue_size, "Maximum queued jobs before rejecting")->check(CLI::PositiveNumber);
  app.add_option("--retention-seconds", retention_seconds, "How long finished tasks stay pollable")
      ->check(CLI::PositiveNumber);
  app.add_option("--static-dir", static_dir, "Directory served at /")->check(CLI::ExistingDirectory);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  dmd::service::ManagerOptions opts;
  opts.concurrency = concurrency;
  opts.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_seconds * 1000));
  opts.queue_capacity = queue_size;
  opts.retention = std::chrono::milliseconds(static_cast<std::int64_t>(retention_seconds * 1000));
  dmd::service::TaskManager tasks(opts);

  httplib::Server server;
  dmd::service::install_routes(server, tasks, static_dir);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (port == 0) {
    port = server.bind_to_any_port(host);
    if (port < 0) {
      std::cerr << "error: cannot bind " << host << "\n";
      return 2;
    }
    std::cout << "listening on http://" << host << ":" << port << std::endl;
    server.listen_after_bind();
    return 0;
  }
  if (!server.bind_to_port(host, port)) {
    std::cerr << "error: cannot bind " << host << ":" << port << "\n";
    return 2;
  }
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  server.listen_after_bind();
  return 0;
}
