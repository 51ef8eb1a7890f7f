#include "benchforge/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "benchforge/error.hpp"
#include "benchforge/util.hpp"

extern char** environ;

namespace benchforge {

namespace {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
};

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

}  // namespace

ProcessOutcome run_process(const ProcessSpec& spec) {
  if (spec.argv.empty()) throw Error("run_process: empty argv");
  ignore_sigpipe();

  // everything the child touches is prepared before fork
  std::vector<std::string> env_storage;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    auto key = entry.substr(0, entry.find('='));
    if (!spec.env.count(key)) env_storage.push_back(std::move(entry));
  }
  for (const auto& [k, v] : spec.env) env_storage.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> argv_storage = spec.argv;
  std::vector<char*> argv;
  for (auto& s : argv_storage) argv.push_back(s.data());
  argv.push_back(nullptr);
  std::string cwd = spec.cwd.string();

  Pipe in, out, err, exec_status;
  auto start = MonoClock::now();
  pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) ::_exit(126);
    ::dup2(in.fd[0], 0);
    ::dup2(out.fd[1], 1);
    ::dup2(err.fd[1], 2);
    ::execvpe(argv[0], argv.data(), envp.data());
    int code = errno;
    (void)!::write(exec_status.fd[1], &code, sizeof code);
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  exec_status.close_write();
  {
    int code = 0;
    ssize_t got;
    do got = ::read(exec_status.fd[0], &code, sizeof code);
    while (got < 0 && errno == EINTR);
    if (got == static_cast<ssize_t>(sizeof code)) {
      int status = 0;
      ::waitpid(pid, &status, 0);
      throw Error("cannot start " + spec.argv[0] + ": " + std::strerror(code));
    }
  }
  in.close_read();
  out.close_write();
  err.close_write();
  ::fcntl(in.fd[1], F_SETFL, O_NONBLOCK);

  ProcessOutcome result;
  std::size_t written = 0;
  if (spec.stdin_data.empty()) in.close_write();
  bool killed = false;
  auto deadline = spec.timeout ? std::optional(start + *spec.timeout) : std::nullopt;
  char buf[65536];
  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    pollfd fds[3];
    int n = 0;
    int out_i = -1, err_i = -1, in_i = -1;
    if (out.fd[0] >= 0) { fds[n] = {out.fd[0], POLLIN, 0}; out_i = n++; }
    if (err.fd[0] >= 0) { fds[n] = {err.fd[0], POLLIN, 0}; err_i = n++; }
    if (in.fd[1] >= 0) { fds[n] = {in.fd[1], POLLOUT, 0}; in_i = n++; }
    int rc = ::poll(fds, static_cast<nfds_t>(n), 10);
    if (rc < 0 && errno != EINTR) break;
    if (rc > 0) {
      auto drain = [&](int idx, Pipe& p, std::string& sink) {
        if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
        auto got = ::read(p.fd[0], buf, sizeof buf);
        if (got > 0) sink.append(buf, static_cast<std::size_t>(got));
        else if (got == 0 || (errno != EINTR && errno != EAGAIN)) p.close_read();
      };
      drain(out_i, out, result.out);
      drain(err_i, err, result.err);
      if (in_i >= 0 && (fds[in_i].revents & (POLLOUT | POLLERR | POLLHUP))) {
        auto w = ::write(in.fd[1], spec.stdin_data.data() + written, spec.stdin_data.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN && errno != EINTR) in.close_write();
        if (written == spec.stdin_data.size()) in.close_write();
      }
    }
    if (!killed) {
      if (deadline && MonoClock::now() >= *deadline) {
        result.timed_out = true;
        killed = true;
      } else if (spec.stop.stop_requested()) {
        result.aborted = true;
        killed = true;
      }
      if (killed) ::kill(-pid, SIGKILL);
    }
  }
  in.close_write();
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.duration =
      std::chrono::duration_cast<std::chrono::milliseconds>(MonoClock::now() - start);
  if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
  else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
  return result;
}

}  // namespace benchforge
