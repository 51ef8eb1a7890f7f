#include "benchforge/experiment.hpp"

#include <unistd.h>

#include <ctime>
#include <mutex>
#include <random>

#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;

namespace {

std::string hostname() {
  char buf[256] = {};
  if (gethostname(buf, sizeof buf - 1) != 0) return "unknown";
  return buf;
}

class StatusPublisher {
 public:
  StatusPublisher(const RunOptions& options, std::string run_id) : callback_(options.on_status) {
    status_.run_id = std::move(run_id);
    status_.started_ms = wall_ms();
  }

  void phase(RunPhase p, std::string message = {}) {
    std::lock_guard lock(mu_);
    status_.phase = p;
    if (!message.empty()) status_.message = std::move(message);
    publish();
  }

  void tasks(const TaskDag& dag, const DagSnapshot& snap) {
    std::lock_guard lock(mu_);
    status_.tasks.clear();
    for (std::size_t i = 0; i < dag.nodes.size() && i < snap.states.size(); ++i)
      status_.tasks.emplace_back(dag.nodes[i].id, snap.states[i]);
    status_.completed = snap.completed;
    status_.total = snap.total;
    publish();
  }

  void tasks(const RunRecord& record) {
    std::lock_guard lock(mu_);
    status_.tasks.clear();
    status_.completed = 0;
    for (const auto& t : record.tasks) {
      status_.tasks.emplace_back(t.id, t.state);
      if (is_terminal(t.state)) ++status_.completed;
    }
    status_.total = record.tasks.size();
  }

 private:
  void publish() {
    if (callback_) callback_(status_);
  }

  std::function<void(const RunStatus&)> callback_;
  std::mutex mu_;
  RunStatus status_;
};

std::string validation_message(const ValidationReport& report) {
  std::string msg = "definition is not runnable:";
  for (const auto& f : report.findings)
    if (f.severity == Severity::error) msg += " " + f.path + ": " + f.message + ";";
  msg.pop_back();
  return msg;
}

void append_message(RunRecord& record, const std::string& text) {
  record.message += (record.message.empty() ? "" : "; ") + text;
}

std::shared_ptr<Executor> make_executor(const ExperimentDefinition& def, const RunOptions& options,
                                        const fs::path& dir) {
  if (options.executor) return options.executor;
  if (def.provider.backend == Backend::remote_shell) {
    if (options.inventory.empty()) throw ValidationError("remote_shell backend needs a host inventory");
    return std::make_shared<RemoteShellExecutor>(load_inventory(options.inventory));
  }
  return std::make_shared<LocalExecutor>(dir / "sandbox", options.keep_sandboxes);
}

nlohmann::json provenance(const ExperimentDefinition& def, const MachineSet& machines) {
  nlohmann::json provider = {{"backend", backend_name(def.provider.backend)},
                             {"instance_profile", def.provider.instance_profile}};
  if (def.provider.spot_price_limit) provider["spot_price_limit"] = *def.provider.spot_price_limit;
  auto cookbooks = nlohmann::json::array();
  for (const auto& c : def.cookbooks) cookbooks.push_back({{"name", c.name}, {"locator", c.locator}, {"version", c.version}});
  auto ms = nlohmann::json::array();
  for (const auto& m : machines.machines)
    ms.push_back({{"id", m.id}, {"group", m.group}, {"address", m.address}, {"instance_profile", m.instance_profile}});
  return {{"definition", serialize_definition(def)},
          {"provider", provider},
          {"cookbooks", cookbooks},
          {"machines", ms},
          {"host", hostname()}};
}

/// Copies files a measurement lists under "artifacts" from the machine into
/// `artifacts/<machine>/` and rewrites the entries to run-relative paths.
void collect_artifacts(RunRecord& record, Executor& executor, const MachineSet& machines, const fs::path& dir) {
  for (auto& m : record.measurements) {
    if (!m.data.contains("artifacts") || !m.data["artifacts"].is_array()) continue;
    const auto* task = record.find_task(m.task);
    const auto* machine = task ? machines.find(task->machine) : nullptr;
    if (!machine) continue;
    auto collected = nlohmann::json::array();
    for (const auto& entry : m.data["artifacts"]) {
      if (!entry.is_string()) continue;
      auto rel = fs::path("artifacts") / machine->id / fs::path(entry.get<std::string>()).filename();
      try {
        write_file(dir / rel, executor.read_machine_file(*machine, entry.get<std::string>()));
        collected.push_back(rel.generic_string());
      } catch (const Error& e) {
        append_message(record, "artifact " + entry.get<std::string>() + ": " + e.what());
      }
    }
    m.data["artifacts"] = collected;
  }
}

/// Effective attributes plus the defaults of every parameter the group's
/// recipes declare and nothing overrides.
AttributeTree resolved_parameters(const ExperimentDefinition& def, const RecipeRegistry& registry, const Group& group,
                                  const AttributeTree& overrides) {
  auto attrs = effective_attributes(def, group, overrides);
  for (const auto& id : group.recipes) {
    const auto* recipe = registry.find(id);
    if (!recipe) continue;
    for (const auto& p : recipe->params)
      if (p.default_value && !attrs.find(p.key)) attrs.set(p.key, *p.default_value);
  }
  return attrs;
}

}  // namespace

nlohmann::json to_json(const RunStatus& status) {
  auto tasks = nlohmann::json::array();
  std::map<std::string, std::size_t> counts;
  for (const auto& [id, state] : status.tasks) {
    tasks.push_back({{"id", id}, {"state", state_name(state)}});
    ++counts[std::string(state_name(state))];
  }
  return {{"run_id", status.run_id},
          {"phase", run_phase_name(status.phase)},
          {"tasks", tasks},
          {"summary", counts},
          {"started_ms", status.started_ms},
          {"progress", {{"completed", status.completed}, {"total", status.total}}},
          {"message", status.message}};
}

std::string new_run_id(const ExperimentDefinition& def) {
  auto now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%S", &tm);
  std::random_device rd;
  return def.name + "-" + stamp + "-" + hex64(mix64(rd() ^ static_cast<std::uint64_t>(mono_us()))).substr(0, 4);
}

fs::path run_directory(const RunOptions& options, const std::string& run_id) { return options.runs_root / run_id; }

RunRecord run_experiment(const ExperimentDefinition& def, const RecipeRegistry& registry, const RunOptions& options) {
  auto report = validate(def, registry, options.overrides);
  if (!report.runnable()) throw ValidationError(validation_message(report));

  const auto run_id = options.run_id.empty() ? new_run_id(def) : options.run_id;
  const auto dir = fs::absolute(run_directory(options, run_id));
  if (fs::exists(dir / "run.json")) throw Error("run directory already holds a run: " + dir.string());
  fs::create_directories(dir);

  StatusPublisher status(options, run_id);
  RunRecord record;
  record.run_id = run_id;
  record.started_ms = wall_ms();
  record.definition_name = def.name;
  record.definition_hash = definition_hash(def);
  record.overrides = options.overrides;
  for (const auto& g : def.groups) record.parameters[g.name] = resolved_parameters(def, registry, g, options.overrides);
  record.provenance = provenance(def, {});

  auto finish = [&](RunRecord& r) {
    r.finished_ms = wall_ms();
    save_run_record(r, dir);
    status.tasks(r);
    status.phase(r.phase, r.message);
    return r;
  };

  status.phase(RunPhase::allocating);
  std::shared_ptr<Executor> executor;
  MachineSet machines;
  try {
    executor = make_executor(def, options, dir);
    auto requests = group_requests(def);
    machines = executor->allocate(def.provider, requests);
  } catch (const Error& e) {
    record.phase = RunPhase::failed;
    record.message = std::string("allocation failed: ") + e.what();
    return finish(record);
  }
  record.provenance = provenance(def, machines);

  auto release = [&](RunRecord& r) {
    try {
      auto released = executor->deallocate(machines);
      auto entries = nlohmann::json::array();
      for (const auto& e : released.entries) {
        entries.push_back({{"machine", e.machine},
                           {"status", e.status == ReleaseStatus::released          ? "released"
                                      : e.status == ReleaseStatus::already_released ? "already_released"
                                                                                    : "failed"},
                           {"message", e.message}});
      }
      r.provenance["release"] = entries;
    } catch (const Error& e) {
      append_message(r, std::string("release failed: ") + e.what());
    }
  };

  TaskDag dag;
  try {
    dag = build_dag(def, registry, machines);
    dag.run_id = run_id;
    dag.definition_hash = record.definition_hash;
    RuntimeVars base{{"run.dir", dir.string()}};
    if (!options.bf_exe.empty()) base["bf.exe"] = fs::absolute(options.bf_exe).string();
    bind_scripts(dag, def, registry, options.overrides, base, executor.get());
  } catch (const Error& e) {
    record.phase = RunPhase::failed;
    record.message = e.what();
    release(record);
    return finish(record);
  }

  status.phase(RunPhase::executing);
  auto fleet = options.fleet;
  if (!fleet && options.monitor_interval_ms > 0)
    fleet = std::make_shared<MonitorFleet>(options.metric_sources ? options.metric_sources
                                                                   : procfs_sources(executor.get()));
  ExecuteOptions exec;
  exec.parallelism = options.parallelism;
  exec.monitor = options.monitor_interval_ms > 0 ? fleet.get() : nullptr;
  exec.monitor_interval_ms = options.monitor_interval_ms;
  exec.stop = options.stop;
  exec.on_transition = [&](const DagSnapshot& snap) { status.tasks(dag, snap); };
  auto executed = execute(dag, *executor, exec);

  executed.run_id = run_id;
  executed.started_ms = record.started_ms;
  executed.definition_name = record.definition_name;
  executed.definition_hash = record.definition_hash;
  executed.overrides = record.overrides;
  executed.parameters = std::move(record.parameters);
  executed.provenance = std::move(record.provenance);

  if (executed.phase != RunPhase::aborted) status.phase(RunPhase::reporting);
  collect_artifacts(executed, *executor, machines, dir);
  for (const auto& [machine, series] : executed.metrics) {
    try {
      for (const auto& files : generate_reports(series, dir / "reports" / machine)) {
        executed.reports.push_back(fs::relative(files.csv, dir).generic_string());
        executed.reports.push_back(fs::relative(files.svg, dir).generic_string());
      }
    } catch (const Error& e) {
      append_message(executed, "reports for " + machine + ": " + e.what());
    }
  }
  release(executed);
  if (options.stop.stop_requested()) executed.phase = RunPhase::aborted;
  return finish(executed);
}

}  // namespace benchforge
