#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "benchforge/experiment.hpp"

namespace benchforge {

struct ServiceConfig {
  std::filesystem::path runs_root = "runs";
  RecipeRegistry registry;
  std::filesystem::path bf_exe;
  std::int64_t monitor_interval_ms = 1000;
  MonitorFleet::SourceFactory metric_sources;
  /// Backend per run, given the run directory; default follows the provider.
  std::function<std::shared_ptr<Executor>(const std::filesystem::path&)> executor_factory;
  std::filesystem::path inventory;
  std::size_t max_body_bytes = 1 << 20;
};

/// HTTP control plane. Handlers never execute tasks inline: each run gets
/// its own coordinator thread and handlers read published snapshots.
///
///   POST /definitions/validate        DSL text -> findings (400 on syntax)
///   POST /definitions                 DSL text -> {"id", findings}
///   GET  /definitions/{id}            canonical definition
///   GET  /definitions/{id}/plan       nodes, edges, stages (404, 409)
///   GET  /definitions/{id}/form       parameter form
///   POST /runs                        {"definition","overrides","run_id"?} -> 202
///   GET  /runs/{id}                   persisted run record
///   GET  /runs/{id}/status            status snapshot
///   GET  /runs/{id}/metrics?machine=  text/event-stream of monitor CSV lines
///   POST /runs/{id}/abort             abort, returns the terminal status
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Serves on a background thread; port 0 picks a free port. Returns the
  /// bound port. Throws Error when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  /// Serves on the calling thread until stop().
  void serve(const std::string& host, int port);

  void stop();

  /// Blocks until every launched run has finished.
  void wait_idle();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace benchforge
