#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "benchforge/attributes.hpp"
#include "benchforge/dag.hpp"
#include "benchforge/monitor.hpp"

namespace benchforge {

enum class RunPhase { allocating, executing, reporting, done, failed, aborted };

std::string_view run_phase_name(RunPhase p) noexcept;
std::optional<RunPhase> run_phase_from_name(std::string_view s) noexcept;
bool is_terminal(RunPhase p) noexcept;

struct TaskRecord {
  std::string id;
  std::string machine;
  std::string recipe;
  TaskState state = TaskState::pending;
  std::int64_t started_us = 0;
  std::int64_t finished_us = 0;
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;
  int exit_code = 0;
  std::string log_ref;  // relative to the run directory
  std::string error;
  std::string log;  // captured output; persisted to log_ref, not run.json
};

/// A workload result a task reported on stdout as `BF_RESULT <json>`.
struct Measurement {
  std::string task;
  std::string kind;  // "batch" | "stream"
  nlohmann::json data;
};

inline constexpr std::string_view kResultMarker = "BF_RESULT ";

/// Extracts every `BF_RESULT {...}` line from task output. Lines whose JSON
/// does not parse or lacks a "kind" are ignored.
std::vector<Measurement> extract_measurements(const std::string& task, std::string_view output);

struct RunRecord {
  std::string run_id;
  std::string definition_name;
  std::string definition_hash;
  RunPhase phase = RunPhase::done;
  std::string message;
  nlohmann::json provenance = nlohmann::json::object();
  AttributeTree overrides;
  std::map<std::string, AttributeTree> parameters;  // effective attributes per group
  std::vector<TaskRecord> tasks;
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<Measurement> measurements;
  std::map<std::string, MetricSeries> metrics;
  std::vector<std::string> reports;  // relative paths
  std::int64_t started_ms = 0;
  std::int64_t finished_ms = 0;

  bool all_succeeded() const noexcept;
  const TaskRecord* find_task(std::string_view id) const;
};

nlohmann::json attributes_json(const AttributeTree& attrs);
AttributeTree attributes_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Writes `run.json`, `logs/<task>.log` and `metrics/<machine>.csv`.
void save_run_record(const RunRecord& record, const std::filesystem::path& dir);

/// Reads a run directory written by save_run_record (logs are not loaded).
RunRecord load_run_record(const std::filesystem::path& dir);

}  // namespace benchforge
