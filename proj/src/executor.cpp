#include "benchforge/executor.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "benchforge/process.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;

const Machine* MachineSet::find(std::string_view id) const {
  auto it = std::find_if(machines.begin(), machines.end(), [&](const auto& m) { return m.id == id; });
  return it == machines.end() ? nullptr : &*it;
}

std::vector<GroupRequest> group_requests(const ExperimentDefinition& def) {
  std::vector<GroupRequest> out;
  for (const auto& g : def.groups) out.push_back({g.name, g.size});
  return out;
}

MachineSet planned_machines(const ExperimentDefinition& def) {
  MachineSet set;
  for (const auto& g : def.groups) {
    for (std::int64_t i = 0; i < g.size; ++i) {
      Machine m;
      m.id = g.name + "-" + std::to_string(i);
      m.group = g.name;
      m.index = set.machines.size();
      m.instance_profile = def.provider.instance_profile;
      set.machines.push_back(std::move(m));
    }
  }
  return set;
}

std::string Executor::read_machine_file(const Machine&, const std::string& path) {
  return read_file(path);
}

std::string LocalExecutor::read_machine_file(const Machine& machine, const std::string& path) {
  fs::path p(path);
  return read_file(p.is_absolute() ? p : fs::path(machine.address) / p);
}

LocalExecutor::LocalExecutor(fs::path root, std::optional<bool> keep) : root_(std::move(root)) {
  if (keep) {
    keep_ = *keep;
  } else {
    const char* env = std::getenv("BENCHFORGE_KEEP_SANDBOX");
    keep_ = env && std::string_view(env) == "1";
  }
}

MachineSet LocalExecutor::allocate(const ProviderSpec& provider, std::span<const GroupRequest> groups) {
  MachineSet set;
  std::lock_guard lock(mutex_);
  for (const auto& g : groups) {
    if (g.size < 1) throw AllocationError("group '" + g.name + "' size must be ≥ 1");
    for (std::int64_t i = 0; i < g.size; ++i) {
      Machine m;
      m.id = g.name + "-" + std::to_string(i);
      m.group = g.name;
      m.index = set.machines.size();
      m.instance_profile = provider.instance_profile;
      auto dir = root_ / m.id;
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw AllocationError("cannot create sandbox " + dir.string() + ": " + ec.message());
      m.address = fs::absolute(dir).lexically_normal().string();
      live_.insert(m.address);
      locks_.try_emplace(m.id, std::make_unique<std::mutex>());
      set.machines.push_back(std::move(m));
    }
  }
  return set;
}

std::mutex& LocalExecutor::machine_lock(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

TaskResult LocalExecutor::run_task(const Machine& machine, const ExecutableScript& script,
                                   std::optional<std::chrono::milliseconds> timeout,
                                   std::stop_token stop) {
  std::lock_guard serial(machine_lock(machine.id));
  ProcessSpec spec;
  spec.argv = {"/bin/sh", "-c", script.text};
  spec.cwd = machine.address;
  spec.env = {{"BF_MACHINE_ID", machine.id}, {"BF_MACHINE_DIR", machine.address},
              {"BF_MACHINE_GROUP", machine.group}};
  spec.timeout = timeout;
  spec.stop = stop;
  auto outcome = run_process(spec);
  TaskResult result{outcome.exit_code, std::move(outcome.out), std::move(outcome.err),
                    outcome.duration};
  if (outcome.timed_out)
    throw TaskTimeout(script.recipe + " on " + machine.id + " timed out after " +
                          std::to_string(timeout->count()) + " ms",
                      std::move(result));
  if (outcome.aborted) throw TaskAborted(script.recipe + " on " + machine.id + " aborted", std::move(result));
  return result;
}

ReleaseReport LocalExecutor::deallocate(const MachineSet& set) {
  ReleaseReport report;
  std::lock_guard lock(mutex_);
  for (const auto& m : set.machines) {
    ReleaseEntry entry{m.id, ReleaseStatus::released, {}};
    if (!live_.count(m.address)) {
      entry.status = ReleaseStatus::already_released;
    } else {
      if (!keep_) {
        std::error_code ec;
        fs::remove_all(m.address, ec);
        if (ec) {
          entry.status = ReleaseStatus::failed;
          entry.message = ec.message();
        }
      }
      if (entry.status != ReleaseStatus::failed) live_.erase(m.address);
    }
    report.entries.push_back(std::move(entry));
  }
  std::error_code ec;
  if (!keep_ && fs::is_empty(root_, ec)) fs::remove(root_, ec);
  return report;
}

std::vector<InventoryHost> parse_inventory(std::string_view text) {
  std::vector<InventoryHost> hosts;
  std::size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    auto line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    std::istringstream in(line);
    InventoryHost h;
    std::string port, extra;
    if (!(in >> h.host >> h.user >> port >> h.group) || (in >> extra))
      throw ParseError("inventory line needs 'host user port group'", lineno, 1);
    try {
      std::size_t used = 0;
      h.port = std::stoi(port, &used);
      if (used != port.size() || h.port <= 0 || h.port > 65535) throw std::invalid_argument(port);
    } catch (const std::exception&) {
      throw ParseError("invalid port '" + port + "'", lineno, 1);
    }
    hosts.push_back(std::move(h));
  }
  return hosts;
}

std::vector<InventoryHost> load_inventory(const fs::path& path) { return parse_inventory(read_file(path)); }

std::string remote_workdir(const Machine& machine) { return "benchforge/" + machine.id; }

RemoteShellExecutor::RemoteShellExecutor(std::vector<InventoryHost> inventory,
                                         std::vector<std::string> ssh_command)
    : inventory_(std::move(inventory)), ssh_(std::move(ssh_command)) {
  if (ssh_.empty()) {
    if (const char* env = std::getenv("BENCHFORGE_SSH"); env && *env) {
      for (auto& part : split(env, ' '))
        if (!part.empty()) ssh_.push_back(part);
    } else {
      ssh_ = {"ssh", "-o", "BatchMode=yes", "-o", "ConnectTimeout=10"};
    }
  }
}

std::vector<std::string> RemoteShellExecutor::ssh_argv(const Machine& machine) const {
  auto argv = ssh_;
  auto colon = machine.address.rfind(':');
  argv.push_back("-p");
  argv.push_back(machine.address.substr(colon + 1));
  argv.push_back(machine.user + "@" + machine.address.substr(0, colon));
  return argv;
}

std::mutex& RemoteShellExecutor::machine_lock(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

MachineSet RemoteShellExecutor::allocate(const ProviderSpec& provider, std::span<const GroupRequest> groups) {
  MachineSet set;
  std::vector<std::string> shortfalls;
  std::set<std::size_t> used;
  for (const auto& g : groups) {
    std::int64_t found = 0;
    for (std::size_t i = 0; i < inventory_.size() && found < g.size; ++i) {
      if (used.count(i) || inventory_[i].group != g.name) continue;
      used.insert(i);
      const auto& h = inventory_[i];
      Machine m;
      m.id = g.name + "-" + std::to_string(found);
      m.group = g.name;
      m.index = set.machines.size();
      m.address = h.host + ":" + std::to_string(h.port);
      m.user = h.user;
      m.instance_profile = provider.instance_profile;
      set.machines.push_back(std::move(m));
      ++found;
    }
    if (found < g.size)
      shortfalls.push_back("group '" + g.name + "' requests " + std::to_string(g.size) +
                           " hosts but the inventory declares " + std::to_string(found) +
                           " (short by " + std::to_string(g.size - found) + ")");
  }
  if (!shortfalls.empty()) {
    std::string msg = "insufficient hosts: ";
    for (std::size_t i = 0; i < shortfalls.size(); ++i) msg += (i ? "; " : "") + shortfalls[i];
    throw AllocationError(msg);
  }
  for (const auto& m : set.machines) {
    ProcessSpec spec;
    spec.argv = ssh_argv(m);
    spec.argv.push_back("sh -s");
    spec.stdin_data = "mkdir -p '" + remote_workdir(m) + "'\n";
    spec.timeout = std::chrono::seconds(30);
    auto outcome = run_process(spec);
    if (outcome.exit_code != 0)
      throw AllocationError("host " + m.address + " unreachable: " + trim(outcome.err));
  }
  std::lock_guard lock(mutex_);
  for (const auto& m : set.machines) live_.insert(m.id + "@" + m.address);
  return set;
}

TaskResult RemoteShellExecutor::run_task(const Machine& machine, const ExecutableScript& script,
                                         std::optional<std::chrono::milliseconds> timeout,
                                         std::stop_token stop) {
  std::lock_guard serial(machine_lock(machine.id));
  ProcessSpec spec;
  spec.argv = ssh_argv(machine);
  spec.argv.push_back("sh -s");
  spec.stdin_data = "cd '" + remote_workdir(machine) + "' || exit 255\n" + "export BF_MACHINE_ID='" +
                    machine.id + "' BF_MACHINE_GROUP='" + machine.group + "'\n" + script.text + "\n";
  spec.timeout = timeout;
  spec.stop = stop;
  auto outcome = run_process(spec);
  TaskResult result{outcome.exit_code, std::move(outcome.out), std::move(outcome.err), outcome.duration};
  if (outcome.timed_out)
    throw TaskTimeout(script.recipe + " on " + machine.id + " timed out", std::move(result));
  if (outcome.aborted) throw TaskAborted(script.recipe + " on " + machine.id + " aborted", std::move(result));
  // ssh reserves 255 for its own failures
  if (result.exit_code == 255)
    throw TransportError("transport failure to " + machine.address + ": " + trim(result.err));
  return result;
}

std::string RemoteShellExecutor::read_machine_file(const Machine& machine, const std::string& path) {
  ProcessSpec spec;
  spec.argv = ssh_argv(machine);
  auto target = path.starts_with('/') ? path : remote_workdir(machine) + "/" + path;
  spec.argv.push_back("cat '" + target + "'");
  spec.timeout = std::chrono::seconds(10);
  auto outcome = run_process(spec);
  if (outcome.exit_code != 0) throw TransportError("cannot read " + path + " on " + machine.address);
  return outcome.out;
}

std::string RemoteShellExecutor::machine_dir(const Machine& machine) const {
  return "$HOME/" + remote_workdir(machine);
}

ReleaseReport RemoteShellExecutor::deallocate(const MachineSet& set) {
  ReleaseReport report;
  std::lock_guard lock(mutex_);
  for (const auto& m : set.machines) {
    auto key = m.id + "@" + m.address;
    ReleaseEntry entry{m.id, ReleaseStatus::released, {}};
    if (!live_.erase(key)) entry.status = ReleaseStatus::already_released;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace benchforge
