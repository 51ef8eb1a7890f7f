#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "benchforge/definition.hpp"
#include "benchforge/executor.hpp"
#include "benchforge/registry.hpp"

namespace benchforge {

class MonitorFleet;
struct RunRecord;

enum class TaskState { pending, ready, running, succeeded, failed, skipped };

std::string_view state_name(TaskState s) noexcept;
std::optional<TaskState> state_from_name(std::string_view s) noexcept;
bool is_terminal(TaskState s) noexcept;

struct TaskNode {
  std::string id;  // "<cookbook>.<recipe>@<machine>"
  std::string machine;
  std::size_t machine_index = 0;
  std::string recipe;
  Phase phase = Phase::run;
  TaskState state = TaskState::pending;
  std::int64_t started_us = 0;  // monotonic, see mono_us()
  std::int64_t finished_us = 0;
  std::int64_t started_ms = 0;  // wall clock
  std::int64_t finished_ms = 0;
  int exit_code = 0;
  std::string log_ref;
  std::string error;
  std::optional<ExecutableScript> script;
};

/// Edges are (from, to) node indices: `from` must succeed before `to` starts.
struct TaskDag {
  std::vector<TaskNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // sorted, unique
  MachineSet machines;
  std::string definition_hash;
  std::string run_id;

  std::optional<std::size_t> index_of(std::string_view task_id) const;
};

std::string task_id(std::string_view recipe, std::string_view machine);

/// One node per (machine, recipe of its group). Throws ValidationError for
/// dependencies that cannot be resolved or that induce a cycle.
TaskDag build_dag(const ExperimentDefinition& def, const RecipeRegistry& registry,
                  const MachineSet& machines);

/// Fills every node's script. Runtime vars: machine.id, machine.group,
/// machine.index, machine.dir (from `executor`, else the machine address),
/// run.id, plus anything in `base` such as run.dir and bf.exe.
void bind_scripts(TaskDag& dag, const ExperimentDefinition& def, const RecipeRegistry& registry,
                  const AttributeTree& overrides, const RuntimeVars& base,
                  const Executor* executor = nullptr);

/// Stage k holds the tasks whose longest incoming dependency path has k edges.
/// Throws ValidationError on a cycle.
std::vector<std::vector<std::size_t>> topological_plan(const TaskDag& dag);

/// Consistent view published after every state transition.
struct DagSnapshot {
  std::vector<TaskState> states;  // parallel to TaskDag::nodes
  std::size_t completed = 0;      // terminal tasks
  std::size_t total = 0;
};

struct ExecuteOptions {
  std::size_t parallelism = 0;  // 0: one slot per machine
  MonitorFleet* monitor = nullptr;
  std::int64_t monitor_interval_ms = 1000;
  std::stop_token stop;
  std::function<void(const DagSnapshot&)> on_transition;
  /// Called with each finished task's result (from a worker thread).
  std::function<void(const TaskNode&, const TaskResult&)> on_result;
};

/// Runs the DAG with at most `parallelism` concurrent tasks. A failed task
/// skips its transitive dependents; independent branches continue. On a stop
/// request running tasks are failed with an abort reason and nothing new starts.
RunRecord execute(const TaskDag& dag, Executor& executor, const ExecuteOptions& options);

}  // namespace benchforge
