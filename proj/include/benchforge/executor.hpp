#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "benchforge/definition.hpp"
#include "benchforge/error.hpp"
#include "benchforge/registry.hpp"

namespace benchforge {

struct Machine {
  std::string id;
  std::string group;
  std::size_t index = 0;  // position in the MachineSet
  std::string address;    // sandbox directory or host:port
  std::string instance_profile;
  std::string user;  // remote only

  friend bool operator==(const Machine&, const Machine&) = default;
};

struct MachineSet {
  std::vector<Machine> machines;

  const Machine* find(std::string_view id) const;
  std::size_t size() const noexcept { return machines.size(); }
  bool empty() const noexcept { return machines.empty(); }
};

struct GroupRequest {
  std::string name;
  std::int64_t size = 1;
};

std::vector<GroupRequest> group_requests(const ExperimentDefinition& def);

/// Machines a definition would get, in allocation order, without touching
/// any backend. Ids are `<group>-<n>`.
MachineSet planned_machines(const ExperimentDefinition& def);

struct TaskResult {
  int exit_code = 0;
  std::string out;
  std::string err;
  std::chrono::milliseconds duration{0};

  bool ok() const noexcept { return exit_code == 0; }
};

class AllocationError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

/// Thrown by run_task when the script outlives its timeout (it has been killed).
class TaskTimeout : public Error {
 public:
  TaskTimeout(std::string message, TaskResult partial)
      : Error(std::move(message)), partial_(std::move(partial)) {}
  const TaskResult& partial() const noexcept { return partial_; }

 private:
  TaskResult partial_;
};

/// Thrown by run_task when the stop token fired while the script was running.
class TaskAborted : public Error {
 public:
  TaskAborted(std::string message, TaskResult partial)
      : Error(std::move(message)), partial_(std::move(partial)) {}
  const TaskResult& partial() const noexcept { return partial_; }

 private:
  TaskResult partial_;
};

enum class ReleaseStatus { released, already_released, failed };

struct ReleaseEntry {
  std::string machine;
  ReleaseStatus status = ReleaseStatus::released;
  std::string message;
};

struct ReleaseReport {
  std::vector<ReleaseEntry> entries;
};

/// Machine backend. run_task may be called concurrently for distinct
/// machines; calls for the same machine are serialized.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual MachineSet allocate(const ProviderSpec& provider, std::span<const GroupRequest> groups) = 0;
  virtual TaskResult run_task(const Machine& machine, const ExecutableScript& script,
                              std::optional<std::chrono::milliseconds> timeout,
                              std::stop_token stop = {}) = 0;
  virtual ReleaseReport deallocate(const MachineSet& set) = 0;

  /// Reads a file on the machine; relative paths resolve against its
  /// working directory.
  virtual std::string read_machine_file(const Machine& machine, const std::string& path);

  /// Working directory as seen by scripts on the machine.
  virtual std::string machine_dir(const Machine& machine) const { return machine.address; }
};

/// Working-directory sandboxes under one root directory.
class LocalExecutor final : public Executor {
 public:
  /// `keep` defaults to BENCHFORGE_KEEP_SANDBOX=1 in the environment.
  explicit LocalExecutor(std::filesystem::path root, std::optional<bool> keep = std::nullopt);

  MachineSet allocate(const ProviderSpec& provider, std::span<const GroupRequest> groups) override;
  TaskResult run_task(const Machine& machine, const ExecutableScript& script,
                      std::optional<std::chrono::milliseconds> timeout,
                      std::stop_token stop = {}) override;
  ReleaseReport deallocate(const MachineSet& set) override;
  std::string read_machine_file(const Machine& machine, const std::string& path) override;

  bool keeps_sandboxes() const noexcept { return keep_; }

 private:
  std::mutex& machine_lock(const std::string& id);

  std::filesystem::path root_;
  bool keep_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::set<std::string> live_;
};

struct InventoryHost {
  std::string host;
  std::string user;
  int port = 22;
  std::string group;
};

/// One `host user port group` line per machine; '#' starts a comment.
std::vector<InventoryHost> parse_inventory(std::string_view text);
std::vector<InventoryHost> load_inventory(const std::filesystem::path& path);

/// Runs scripts over ssh (`<ssh...> -p PORT user@host sh -s`, script on stdin).
class RemoteShellExecutor final : public Executor {
 public:
  /// `ssh_command` defaults to BENCHFORGE_SSH split on spaces, else
  /// `ssh -o BatchMode=yes -o ConnectTimeout=10`.
  explicit RemoteShellExecutor(std::vector<InventoryHost> inventory,
                               std::vector<std::string> ssh_command = {});

  MachineSet allocate(const ProviderSpec& provider, std::span<const GroupRequest> groups) override;
  TaskResult run_task(const Machine& machine, const ExecutableScript& script,
                      std::optional<std::chrono::milliseconds> timeout,
                      std::stop_token stop = {}) override;
  ReleaseReport deallocate(const MachineSet& set) override;
  std::string read_machine_file(const Machine& machine, const std::string& path) override;
  std::string machine_dir(const Machine& machine) const override;

 private:
  std::vector<std::string> ssh_argv(const Machine& machine) const;
  std::mutex& machine_lock(const std::string& id);

  std::vector<InventoryHost> inventory_;
  std::vector<std::string> ssh_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  std::set<std::string> live_;
};

/// Remote working directory of a machine, relative to the login directory.
std::string remote_workdir(const Machine& machine);

}  // namespace benchforge
