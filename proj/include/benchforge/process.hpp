#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

namespace benchforge {

struct ProcessSpec {
  std::vector<std::string> argv;
  std::filesystem::path cwd;
  std::map<std::string, std::string> env;  // added to the inherited environment
  std::string stdin_data;
  std::optional<std::chrono::milliseconds> timeout;
  std::stop_token stop;
};

struct ProcessOutcome {
  int exit_code = -1;  // 128 + signal when killed by a signal
  std::string out;
  std::string err;
  std::chrono::milliseconds duration{0};
  bool timed_out = false;
  bool aborted = false;
};

/// Runs a child in its own process group and captures both output streams.
/// On timeout or stop request the whole group is killed. Throws Error when
/// the process cannot be started.
ProcessOutcome run_process(const ProcessSpec& spec);

}  // namespace benchforge
