#include "benchforge/dag.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include "benchforge/monitor.hpp"
#include "benchforge/run_record.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

std::string_view state_name(TaskState s) noexcept {
  switch (s) {
    case TaskState::pending: return "pending";
    case TaskState::ready: return "ready";
    case TaskState::running: return "running";
    case TaskState::succeeded: return "succeeded";
    case TaskState::failed: return "failed";
    case TaskState::skipped: return "skipped";
  }
  return "?";
}

std::optional<TaskState> state_from_name(std::string_view s) noexcept {
  for (auto v : {TaskState::pending, TaskState::ready, TaskState::running, TaskState::succeeded,
                 TaskState::failed, TaskState::skipped})
    if (state_name(v) == s) return v;
  return std::nullopt;
}

bool is_terminal(TaskState s) noexcept {
  return s == TaskState::succeeded || s == TaskState::failed || s == TaskState::skipped;
}

std::optional<std::size_t> TaskDag::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  return std::nullopt;
}

std::string task_id(std::string_view recipe, std::string_view machine) {
  std::string id(recipe);
  if (auto pos = id.find("::"); pos != std::string::npos) id.replace(pos, 2, ".");
  return id + "@" + std::string(machine);
}

TaskDag build_dag(const ExperimentDefinition& def, const RecipeRegistry& registry,
                  const MachineSet& machines) {
  TaskDag dag;
  dag.machines = machines;
  dag.definition_hash = definition_hash(def);
  std::map<std::string, std::vector<std::size_t>, std::less<>> instances;
  for (const auto& m : machines.machines) {
    const auto* group = def.find_group(m.group);
    if (!group) throw ValidationError("machine " + m.id + " belongs to unknown group '" + m.group + "'");
    for (const auto& ref : group->recipes) {
      const auto* recipe = registry.find(ref);
      if (!recipe) throw ValidationError("unknown recipe '" + ref + "'");
      TaskNode node;
      node.id = task_id(ref, m.id);
      node.machine = m.id;
      node.machine_index = m.index;
      node.recipe = ref;
      node.phase = recipe->phase;
      if (dag.index_of(node.id)) throw ValidationError("recipe '" + ref + "' listed twice for group " + m.group);
      instances[ref].push_back(dag.nodes.size());
      dag.nodes.push_back(std::move(node));
    }
  }
  std::set<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t t = 0; t < dag.nodes.size(); ++t) {
    const auto& node = dag.nodes[t];
    for (const auto& dep : registry.find(node.recipe)->deps) {
      auto it = instances.find(dep.target);
      if (it == instances.end() || it->second.empty())
        throw ValidationError("unresolvable dependency: " + node.recipe + " needs " + dep.target +
                              ", which is not instantiated on any machine");
      const auto& inst = it->second;
      switch (dep.scope) {
        case DepScope::same_machine: {
          auto same = std::find_if(inst.begin(), inst.end(),
                                   [&](std::size_t i) { return dag.nodes[i].machine == node.machine; });
          if (same == inst.end())
            throw ValidationError("unresolvable dependency: " + node.id + " needs " + dep.target +
                                  " on the same machine");
          edges.emplace(*same, t);
          break;
        }
        case DepScope::any_machine:
          edges.emplace(inst.front(), t);
          break;
        case DepScope::all_machines:
          for (auto i : inst) edges.emplace(i, t);
          break;
      }
    }
  }
  for (std::size_t a = 0; a < dag.nodes.size(); ++a) {
    if (dag.nodes[a].phase != Phase::datagen) continue;
    for (std::size_t b = 0; b < dag.nodes.size(); ++b)
      if (dag.nodes[b].phase == Phase::run) edges.emplace(a, b);
  }
  dag.edges.assign(edges.begin(), edges.end());
  try {
    (void)topological_plan(dag);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("induced ") + e.what());
  }
  return dag;
}

void bind_scripts(TaskDag& dag, const ExperimentDefinition& def, const RecipeRegistry& registry,
                  const AttributeTree& overrides, const RuntimeVars& base, const Executor* executor) {
  std::map<std::string, AttributeTree> per_group;
  for (const auto& g : def.groups) per_group[g.name] = effective_attributes(def, g, overrides);
  for (auto& node : dag.nodes) {
    const auto* m = dag.machines.find(node.machine);
    RuntimeVars vars = base;
    vars["machine.id"] = node.machine;
    vars["machine.index"] = std::to_string(node.machine_index);
    if (m) {
      vars["machine.group"] = m->group;
      vars["machine.dir"] = executor ? executor->machine_dir(*m) : m->address;
    }
    vars["run.id"] = dag.run_id;
    node.script = substitute_params(*registry.find(node.recipe), per_group.at(m ? m->group : ""), vars);
  }
}

std::vector<std::vector<std::size_t>> topological_plan(const TaskDag& dag) {
  const auto n = dag.nodes.size();
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indeg(n, 0), depth(n, 0);
  for (auto [a, b] : dag.edges) {
    if (a >= n || b >= n) throw ValidationError("edge endpoint out of range");
    succ[a].push_back(b);
    ++indeg[b];
  }
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) queue.push_back(i);
  std::size_t seen = 0, max_depth = 0;
  while (!queue.empty()) {
    auto u = queue.front();
    queue.pop_front();
    ++seen;
    max_depth = std::max(max_depth, depth[u]);
    for (auto v : succ[u]) {
      depth[v] = std::max(depth[v], depth[u] + 1);
      if (--indeg[v] == 0) queue.push_back(v);
    }
  }
  if (seen != n) {
    std::string members;
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] > 0) members += (members.empty() ? "" : ", ") + dag.nodes[i].id;
    throw ValidationError("cycle among tasks: " + members);
  }
  std::vector<std::vector<std::size_t>> stages(n == 0 ? 0 : max_depth + 1);
  for (std::size_t i = 0; i < n; ++i) stages[depth[i]].push_back(i);
  return stages;
}

namespace {

class Coordinator {
 public:
  Coordinator(const TaskDag& dag, Executor& executor, const ExecuteOptions& options)
      : dag_(dag), executor_(executor), options_(options), nodes_(dag.nodes) {
    const auto n = nodes_.size();
    succ_.resize(n);
    remaining_.assign(n, 0);
    results_.resize(n);
    for (auto [a, b] : dag.edges) {
      succ_[a].push_back(b);
      ++remaining_[b];
    }
    for (auto& node : nodes_) node.state = TaskState::pending;
    for (std::size_t i = 0; i < n; ++i)
      if (remaining_[i] == 0) make_ready(i);
  }

  void run() {
    std::size_t slots = options_.parallelism;
    if (slots == 0) slots = std::max<std::size_t>(1, dag_.machines.size());
    slots = std::min(slots, std::max<std::size_t>(1, nodes_.size()));
    std::stop_callback wake(options_.stop, [this] {
      std::lock_guard lock(mutex_);
      cv_.notify_all();
    });
    publish();
    {
      std::vector<std::jthread> workers;
      for (std::size_t i = 0; i < slots; ++i) workers.emplace_back([this] { work(); });
    }
  }

  std::vector<TaskNode>& nodes() { return nodes_; }
  std::vector<TaskResult>& results() { return results_; }

 private:
  void make_ready(std::size_t i) {
    nodes_[i].state = TaskState::ready;
    ready_.push_back(i);
  }

  bool finished_locked() const { return completed_ == nodes_.size(); }

  void skip_dependents(std::size_t root) {
    std::vector<std::size_t> stack(succ_[root].begin(), succ_[root].end());
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      if (nodes_[v].state != TaskState::pending) continue;
      nodes_[v].state = TaskState::skipped;
      nodes_[v].error = "dependency " + nodes_[root].id + " did not succeed";
      ++completed_;
      stack.insert(stack.end(), succ_[v].begin(), succ_[v].end());
    }
  }

  void abort_remaining() {
    for (auto& node : nodes_) {
      if (node.state == TaskState::pending || node.state == TaskState::ready) {
        node.state = TaskState::skipped;
        node.error = "run aborted";
        ++completed_;
      }
    }
    ready_.clear();
  }

  void work() {
    while (true) {
      std::size_t task;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return !ready_.empty() || finished_locked() || options_.stop.stop_requested(); });
        if (options_.stop.stop_requested() && !aborted_) {
          aborted_ = true;
          abort_remaining();
          cv_.notify_all();
          lock.unlock();
          publish();
          lock.lock();
        }
        if (ready_.empty()) {
          if (finished_locked() || aborted_) return;
          continue;
        }
        task = ready_.front();
        ready_.pop_front();
        auto& node = nodes_[task];
        node.state = TaskState::running;
        node.started_us = mono_us();
        node.started_ms = wall_ms();
      }
      publish();

      const auto& node = nodes_[task];
      const auto* machine = dag_.machines.find(node.machine);
      TaskResult result;
      std::string error;
      bool ok = false;
      try {
        if (!machine) throw Error("machine " + node.machine + " is not allocated");
        if (!node.script) throw Error("task " + node.id + " has no bound script");
        const auto* script = &*node.script;
        result = executor_.run_task(*machine, *script, script->timeout, options_.stop);
        ok = result.ok();
        if (!ok) error = "exit code " + std::to_string(result.exit_code);
      } catch (const TaskTimeout& e) {
        result = e.partial();
        error = e.what();
      } catch (const TaskAborted& e) {
        result = e.partial();
        error = std::string("aborted: ") + e.what();
      } catch (const std::exception& e) {
        result.exit_code = -1;
        error = e.what();
      }
      auto finished_us = mono_us();
      auto finished_ms = wall_ms();
      if (options_.on_result) options_.on_result(node, result);
      {
        std::lock_guard lock(mutex_);
        auto& n = nodes_[task];
        n.finished_us = finished_us;
        n.finished_ms = finished_ms;
        n.exit_code = result.exit_code;
        n.error = error;
        n.state = ok ? TaskState::succeeded : TaskState::failed;
        results_[task] = std::move(result);
        ++completed_;
        if (ok) {
          for (auto v : succ_[task])
            if (--remaining_[v] == 0 && nodes_[v].state == TaskState::pending && !aborted_) make_ready(v);
        } else {
          skip_dependents(task);
        }
        cv_.notify_all();
      }
      publish();
    }
  }

  void publish() {
    if (!options_.on_transition) return;
    DagSnapshot snap;
    std::uint64_t seq;
    {
      std::lock_guard lock(mutex_);
      seq = ++seq_;
      snap.total = nodes_.size();
      snap.completed = completed_;
      for (const auto& n : nodes_) snap.states.push_back(n.state);
    }
    std::lock_guard publish_lock(publish_mutex_);
    if (seq <= published_) return;
    published_ = seq;
    options_.on_transition(snap);
  }

  const TaskDag& dag_;
  Executor& executor_;
  const ExecuteOptions& options_;
  std::vector<TaskNode> nodes_;
  std::vector<std::vector<std::size_t>> succ_;
  std::vector<std::size_t> remaining_;
  std::vector<TaskResult> results_;
  std::deque<std::size_t> ready_;
  std::size_t completed_ = 0;
  bool aborted_ = false;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::mutex publish_mutex_;
  std::uint64_t seq_ = 0;
  std::uint64_t published_ = 0;
};

std::string combined_log(const TaskResult& r) {
  std::string log = r.out;
  if (!r.err.empty()) {
    if (!log.empty() && log.back() != '\n') log += '\n';
    log += "--- stderr ---\n" + r.err;
  }
  return log;
}

}  // namespace

RunRecord execute(const TaskDag& dag, Executor& executor, const ExecuteOptions& options) {
  RunRecord record;
  record.run_id = dag.run_id;
  record.definition_hash = dag.definition_hash;
  record.started_ms = wall_ms();

  std::vector<MonitorHandle> handles;
  if (options.monitor && options.monitor_interval_ms > 0) {
    for (const auto& m : dag.machines.machines) {
      try {
        handles.push_back(options.monitor->start_monitor(m, options.monitor_interval_ms));
      } catch (const Error& e) {
        record.message += std::string(record.message.empty() ? "" : "; ") + "monitor " + m.id + ": " + e.what();
      }
    }
  }

  Coordinator coordinator(dag, executor, options);
  coordinator.run();

  for (const auto& h : handles) record.metrics[h.machine] = options.monitor->stop_monitor(h);

  const auto& nodes = coordinator.nodes();
  const auto& results = coordinator.results();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    TaskRecord t;
    t.id = n.id;
    t.machine = n.machine;
    t.recipe = n.recipe;
    t.state = n.state;
    t.started_us = n.started_us;
    t.finished_us = n.finished_us;
    t.started_ms = n.started_ms;
    t.finished_ms = n.finished_ms;
    t.exit_code = n.exit_code;
    t.error = n.error;
    t.log = combined_log(results[i]);
    t.log_ref = "logs/" + n.id + ".log";
    if (n.state == TaskState::succeeded) {
      auto ms = extract_measurements(n.id, results[i].out);
      record.measurements.insert(record.measurements.end(), ms.begin(), ms.end());
    }
    record.tasks.push_back(std::move(t));
  }
  for (auto [a, b] : dag.edges) record.edges.emplace_back(nodes[a].id, nodes[b].id);
  record.phase = options.stop.stop_requested() ? RunPhase::aborted
                 : record.all_succeeded()      ? RunPhase::done
                                               : RunPhase::failed;
  record.finished_ms = wall_ms();
  return record;
}

}  // namespace benchforge
