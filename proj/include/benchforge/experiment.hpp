#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stop_token>
#include <string>
#include <vector>

#include "benchforge/dag.hpp"
#include "benchforge/monitor.hpp"
#include "benchforge/run_record.hpp"

namespace benchforge {

/// Point-in-time view of a run. `completed <= total` always holds.
struct RunStatus {
  std::string run_id;
  RunPhase phase = RunPhase::allocating;
  std::vector<std::pair<std::string, TaskState>> tasks;
  std::int64_t started_ms = 0;
  std::size_t completed = 0;
  std::size_t total = 0;
  std::string message;
};

nlohmann::json to_json(const RunStatus& status);

struct RunOptions {
  std::filesystem::path runs_root = "runs";
  std::string run_id;  // generated when empty
  AttributeTree overrides;
  std::int64_t monitor_interval_ms = 1000;  // 0 disables monitoring
  std::size_t parallelism = 0;
  std::optional<bool> keep_sandboxes;
  std::filesystem::path bf_exe;  // value of {{bf.exe}}
  std::filesystem::path inventory;  // host list for the remote_shell backend
  std::shared_ptr<Executor> executor;  // overrides the provider's backend
  MonitorFleet::SourceFactory metric_sources;  // default: procfs through the executor
  std::shared_ptr<MonitorFleet> fleet;          // created from metric_sources when null
  std::stop_token stop;
  std::function<void(const RunStatus&)> on_status;
};

/// `<name>-<yyyymmddThhmmss>-<4 hex>`.
std::string new_run_id(const ExperimentDefinition& def);

/// Validates overrides, allocates machines, runs the task DAG under the
/// metric monitors, writes run.json, logs/, metrics/ and reports/ under
/// `runs_root/run_id`, then releases the machines. Throws ValidationError
/// before allocating anything when the definition or overrides are invalid.
/// Task, allocation and abort outcomes are reported through the record phase.
RunRecord run_experiment(const ExperimentDefinition& def, const RecipeRegistry& registry, const RunOptions& options);

/// Directory a run with this id is written to.
std::filesystem::path run_directory(const RunOptions& options, const std::string& run_id);

}  // namespace benchforge
