#include <unistd.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "benchforge/batch.hpp"
#include "benchforge/documents.hpp"
#include "benchforge/experiment.hpp"
#include "benchforge/plan.hpp"
#include "benchforge/report.hpp"
#include "benchforge/service.hpp"
#include "benchforge/stream.hpp"
#include "benchforge/util.hpp"

namespace fs = std::filesystem;
using namespace benchforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitIo = 2;
constexpr int kExitInterrupted = 130;

std::atomic<bool> g_interrupted{false};

extern "C" void on_interrupt(int) { g_interrupted.store(true); }

bool use_color() {
  const char* no_color = std::getenv("NO_COLOR");
  if (no_color && *no_color) return false;
  return isatty(STDOUT_FILENO) != 0;
}

std::string severity_label(Severity s) {
  std::string label(severity_name(s));
  if (!use_color()) return label;
  return (s == Severity::error ? "\033[31m" : "\033[33m") + label + "\033[0m";
}

fs::path self_exe() {
  std::error_code ec;
  auto p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? fs::path("bf") : p;
}

std::vector<fs::path> cookbook_roots(const std::vector<std::string>& flags) {
  std::vector<fs::path> roots(flags.begin(), flags.end());
  if (roots.empty()) {
    if (const char* env = std::getenv("BENCHFORGE_COOKBOOKS"); env && *env) roots.emplace_back(env);
  }
  return roots;
}

struct Loaded {
  ExperimentDefinition def;
  RecipeRegistry registry;
};

/// Reads and parses a definition; I/O problems throw IoError, syntax
/// problems ParseError.
Loaded load(const std::string& file, const std::vector<std::string>& cookbooks) {
  if (!fs::is_regular_file(file)) throw IoError("cannot read " + file);
  Loaded l;
  l.def = parse_definition(read_file(file));
  l.registry = resolve_registry(l.def, fs::absolute(file).parent_path(), cookbook_roots(cookbooks));
  return l;
}

AttributeTree parse_sets(const std::vector<std::string>& sets) {
  AttributeTree t;
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
    t.set(s.substr(0, eq), infer_scalar(s.substr(eq + 1)));
  }
  return t;
}

void print_findings(const ValidationReport& report) {
  for (const auto& f : report.findings)
    std::cout << severity_label(f.severity) << ' ' << f.path << ' ' << f.message << '\n';
}

int cmd_validate(const std::string& file, const std::vector<std::string>& cookbooks,
                 const std::vector<std::string>& sets, bool as_json) {
  ValidationReport report;
  try {
    auto l = load(file, cookbooks);
    report = validate(l.def, l.registry, parse_sets(sets));
  } catch (const ParseError& e) {
    report.findings.push_back(syntax_finding(e));
  } catch (const IoError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  if (as_json)
    std::cout << validation_json(report).dump(2) << '\n';
  else
    print_findings(report);
  return report.runnable() ? kExitOk : kExitFailure;
}

int cmd_plan(const std::string& file, const std::vector<std::string>& cookbooks, bool dot, bool as_json) {
  Loaded l;
  try {
    l = load(file, cookbooks);
  } catch (const ParseError& e) {
    ValidationReport r;
    r.findings.push_back(syntax_finding(e));
    print_findings(r);
    return kExitFailure;
  } catch (const IoError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  auto report = validate(l.def, l.registry);
  if (!report.runnable()) {
    print_findings(report);
    return kExitFailure;
  }
  try {
    auto plan = make_plan(l.def, l.registry);
    if (as_json)
      std::cout << plan_json(plan).dump(2) << '\n';
    else if (dot)
      std::cout << plan_dot(plan);
    else
      std::cout << plan_text(plan);
  } catch (const ValidationError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

struct RunArgs {
  std::string file;
  std::vector<std::string> cookbooks;
  std::vector<std::string> sets;
  std::int64_t monitor_interval_ms = 1000;
  bool keep = false;
  std::string runs_root = "runs";
  std::size_t parallelism = 0;
  std::string inventory;
  std::string run_id;
};

int cmd_run(const RunArgs& a) {
  Loaded l;
  RunOptions options;
  try {
    l = load(a.file, a.cookbooks);
    options.overrides = parse_sets(a.sets);
  } catch (const ParseError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  } catch (const IoError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  }
  options.runs_root = a.runs_root;
  options.run_id = a.run_id;
  options.monitor_interval_ms = a.monitor_interval_ms;
  options.parallelism = a.parallelism;
  if (a.keep) options.keep_sandboxes = true;
  options.bf_exe = self_exe();
  options.inventory = a.inventory;

  std::stop_source stop;
  options.stop = stop.get_token();
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  std::jthread watcher([&stop](std::stop_token done) {
    while (!done.stop_requested()) {
      if (g_interrupted.load()) {
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  options.on_status = [](const RunStatus& s) {
    static RunPhase last = RunPhase::allocating;
    static bool first = true;
    if (first || s.phase != last) std::cerr << "bf: " << run_phase_name(s.phase) << '\n';
    first = false;
    last = s.phase;
  };

  RunRecord record;
  try {
    record = run_experiment(l.def, l.registry, options);
  } catch (const ValidationError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  watcher.request_stop();
  if (!record.message.empty()) std::cerr << "bf: " << record.message << '\n';
  for (const auto& t : record.tasks)
    if (t.state != TaskState::succeeded)
      std::cerr << "bf: " << t.id << ' ' << state_name(t.state) << (t.error.empty() ? "" : ": " + t.error) << '\n';
  std::cout << fs::absolute(run_directory(options, record.run_id)).string() << '\n';
  if (record.phase == RunPhase::aborted || g_interrupted.load()) return kExitInterrupted;
  return record.phase == RunPhase::done ? kExitOk : kExitFailure;
}

int cmd_report(const std::vector<std::string>& dirs, double p, const std::string& out) {
  std::vector<RunRecord> runs;
  try {
    for (const auto& d : dirs) runs.push_back(load_run_record(d));
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  try {
    auto kind = common_workload_kind(runs);
    auto table = kind == WorkloadKind::batch ? build_batch_comparison(runs) : build_stream_comparison(runs, p);
    for (const auto& w : table.warnings) std::cerr << "bf: warning: " << w << '\n';
    for (const auto& path : render(table, out)) std::cout << path.string() << '\n';
  } catch (const IoError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

int cmd_serve(const std::string& host, int port, const std::string& runs_root,
              const std::vector<std::string>& cookbooks, std::int64_t monitor_interval_ms,
              const std::string& inventory) {
  ServiceConfig config;
  auto roots = cookbook_roots(cookbooks);
  if (roots.empty() && fs::is_directory("cookbooks")) roots.emplace_back("cookbooks");
  try {
    if (roots.empty()) throw IoError("no cookbook directory; pass --cookbooks");
    ExperimentDefinition none;
    config.registry = resolve_registry(none, {}, roots);
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  config.runs_root = runs_root;
  config.bf_exe = self_exe();
  config.monitor_interval_ms = monitor_interval_ms;
  config.inventory = inventory;
  Service service(std::move(config));
  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  try {
    auto bound = service.start(host, port);
    std::cerr << "bf: serving on http://" << host << ':' << bound << '\n';
  } catch (const Error& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  }
  while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  service.stop();
  return kExitOk;
}

void emit_result(const nlohmann::json& j) { std::cout << kResultMarker << j.dump() << std::endl; }

std::uint64_t bytes_arg(const std::string& text, const char* what) {
  auto b = parse_bytes(text);
  if (!b) throw ValidationError(std::string("invalid ") + what + " '" + text + "'");
  return *b;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reproducible benchmark experiment orchestrator", "bf"};
  app.require_subcommand(1);

  std::string file;
  std::vector<std::string> cookbooks;
  std::vector<std::string> sets;
  bool as_json = false;

  auto* validate_cmd = app.add_subcommand("validate", "Check a definition against its cookbooks");
  validate_cmd->add_option("file", file, "Definition file")->required();
  validate_cmd->add_option("--cookbooks", cookbooks, "Cookbook directory (repeatable)");
  validate_cmd->add_option("--set", sets, "Override key=value (repeatable)");
  validate_cmd->add_flag("--json", as_json, "Machine-readable findings");

  bool dot = false;
  auto* plan_cmd = app.add_subcommand("plan", "Show the execution DAG by stage");
  plan_cmd->add_option("file", file, "Definition file")->required();
  plan_cmd->add_option("--cookbooks", cookbooks, "Cookbook directory (repeatable)");
  plan_cmd->add_flag("--dot", dot, "Graphviz output");
  plan_cmd->add_flag("--json", as_json, "Machine-readable plan");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Execute a definition end to end");
  run_cmd->add_option("file", run_args.file, "Definition file")->required();
  run_cmd->add_option("--cookbooks", run_args.cookbooks, "Cookbook directory (repeatable)");
  run_cmd->add_option("--set", run_args.sets, "Override key=value (repeatable, last wins)");
  run_cmd->add_option("--monitor-interval", run_args.monitor_interval_ms, "Sampling interval in ms (0 disables)");
  run_cmd->add_flag("--keep", run_args.keep, "Keep machine sandboxes");
  run_cmd->add_option("--runs", run_args.runs_root, "Directory receiving run directories");
  run_cmd->add_option("--parallelism", run_args.parallelism, "Concurrent task limit (default: machine count)");
  run_cmd->add_option("--inventory", run_args.inventory, "Host inventory for the remote_shell backend");
  run_cmd->add_option("--run-id", run_args.run_id, "Run id (default: generated)");

  std::vector<std::string> report_dirs;
  double pct = 99;
  std::string report_out = "report";
  auto* report_cmd = app.add_subcommand("report", "Compare finished runs");
  report_cmd->add_option("runs", report_dirs, "Run directories")->required();
  report_cmd->add_option("--percentile", pct, "Latency percentile for stream runs")->check(CLI::Range(0.0, 100.0));
  report_cmd->add_option("--out", report_out, "Output directory");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string runs_root = "runs";
  std::int64_t serve_interval = 1000;
  std::string inventory;
  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP control plane");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port (0 picks one)");
  serve_cmd->add_option("--runs", runs_root, "Directory receiving run directories");
  serve_cmd->add_option("--cookbooks", cookbooks, "Cookbook directory (repeatable)");
  serve_cmd->add_option("--monitor-interval", serve_interval, "Sampling interval in ms");
  serve_cmd->add_option("--inventory", inventory, "Host inventory for the remote_shell backend");

  auto* workload = app.add_subcommand("workload", "Run a workload step and print BF_RESULT");
  workload->require_subcommand(1);

  std::uint64_t records = 0, seed = 42;
  std::string out_path, memory = "16MB";
  auto* gen = workload->add_subcommand("gen-records", "Write deterministic 100-byte records");
  gen->add_option("--records", records)->required();
  gen->add_option("--seed", seed);
  gen->add_option("--out", out_path)->required();

  std::string input_path, tmp_dir, engine = "builtin", engine_cmd;
  auto* sort = workload->add_subcommand("sort", "Sort a record file and report execution time");
  sort->add_option("--input", input_path)->required();
  sort->add_option("--output", out_path)->required();
  sort->add_option("--memory-limit", memory);
  sort->add_option("--tmp", tmp_dir);
  sort->add_option("--engine", engine, "Engine label");
  sort->add_option("--engine-cmd", engine_cmd, "Shell command replacing the built-in sort");

  BatchParams batch;
  std::string work_dir = "batch";
  auto* batch_cmd = workload->add_subcommand("batch", "Generate then sort, reporting execution time");
  batch_cmd->add_option("--records", batch.records)->required();
  batch_cmd->add_option("--memory-limit", memory);
  batch_cmd->add_option("--seed", batch.seed);
  batch_cmd->add_option("--engine", batch.engine_label, "Engine label");
  batch_cmd->add_option("--engine-cmd", batch.engine_cmd, "Shell command replacing the built-in sort");
  batch_cmd->add_option("--work-dir", work_dir);
  batch_cmd->add_flag("--keep-data", batch.keep_data);

  StreamParams stream;
  std::string stream_out;
  auto* stream_cmd = workload->add_subcommand("stream", "Ad-campaign streaming benchmark");
  stream_cmd->add_option("--rate", stream.rate, "Events per second")->check(CLI::PositiveNumber);
  stream_cmd->add_option("--duration", stream.duration_s, "Seconds")->check(CLI::PositiveNumber);
  stream_cmd->add_option("--window-ms", stream.window_ms);
  stream_cmd->add_option("--campaigns", stream.num_campaigns);
  stream_cmd->add_option("--ads-per-campaign", stream.ads_per_campaign);
  stream_cmd->add_option("--queue-capacity", stream.queue_capacity);
  stream_cmd->add_option("--processor-eps", stream.processor_eps, "Processing throughput cap (0: none)");
  stream_cmd->add_option("--seed", stream.seed);
  stream_cmd->add_option("--engine", stream.engine_label, "Engine label");
  stream_cmd->add_option("--out", stream_out, "Directory for store.csv and events.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) return cmd_validate(file, cookbooks, sets, as_json);
    if (*plan_cmd) return cmd_plan(file, cookbooks, dot, as_json);
    if (*run_cmd) return cmd_run(run_args);
    if (*report_cmd) return cmd_report(report_dirs, pct, report_out);
    if (*serve_cmd) return cmd_serve(host, port, runs_root, cookbooks, serve_interval, inventory);
    if (*gen) {
      auto t0 = MonoClock::now();
      auto f = gen_records(records, seed, out_path);
      emit_result({{"kind", "gen-records"},
                   {"records", f.record_count},
                   {"bytes", f.bytes()},
                   {"datagen_time_ms",
                    std::chrono::duration_cast<std::chrono::milliseconds>(MonoClock::now() - t0).count()}});
      return kExitOk;
    }
    if (*sort) {
      auto input = open_record_file(input_path);
      auto tmp = tmp_dir.empty() ? fs::absolute(out_path).parent_path() / "tmp" : fs::path(tmp_dir);
      auto r = sort_with_engine(input, out_path, bytes_arg(memory, "memory limit"), tmp, engine, engine_cmd);
      emit_result(r.to_json());
      return r.sorted ? kExitOk : kExitFailure;
    }
    if (*batch_cmd) {
      batch.memory_limit = bytes_arg(memory, "memory limit");
      batch.work_dir = work_dir;
      auto r = run_batch_experiment(batch);
      emit_result(r.to_json());
      return r.sorted ? kExitOk : kExitFailure;
    }
    if (*stream_cmd) {
      if (!stream_out.empty()) stream.out_dir = stream_out;
      std::signal(SIGINT, on_interrupt);
      std::stop_source stop;
      std::jthread watcher([&stop](std::stop_token done) {
        while (!done.stop_requested()) {
          if (g_interrupted.load()) stop.request_stop();
          std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
      });
      auto r = run_stream_experiment(stream, stop.get_token());
      watcher.request_stop();
      std::cerr << "bf: emitted " << r.emitted << ", dropped " << r.dropped << ", windows " << r.rows << '\n';
      emit_result(r.to_json());
      return g_interrupted.load() ? kExitInterrupted : kExitOk;
    }
  } catch (const IoError& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "bf: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
