// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "../scheduler_support.hpp"
#include "../support.hpp"
#include "benchforge/batch.hpp"
#include "benchforge/definition.hpp"
#include "benchforge/monitor.hpp"
#include "benchforge/percentile.hpp"
#include "benchforge/plan.hpp"
#include "benchforge/process.hpp"
#include "benchforge/stream.hpp"

using namespace benchforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

/// Collects the first few problems of a criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (problems_.size() < 5) problems_.push_back(what);
    ++count_;
  }
  bool ok() const { return count_ == 0; }
  std::string summary() const {
    std::string s;
    for (const auto& p : problems_) s += (s.empty() ? "" : "; ") + p;
    if (count_ > problems_.size()) s += "; +" + std::to_string(count_ - problems_.size()) + " more";
    return s;
  }

 private:
  std::vector<std::string> problems_;
  std::size_t count_ = 0;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void(Check&)> body;
};

template <class T>
std::string str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

using Rec = std::array<unsigned char, 100>;

std::vector<Rec> load_records(const fs::path& p) {
  auto text = read_file(p);
  std::vector<Rec> out(text.size() / 100);
  if (!text.empty()) std::memcpy(out.data(), text.data(), text.size());
  return out;
}

void store_records(const fs::path& p, const std::vector<Rec>& recs) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(recs.data()), static_cast<std::streamsize>(recs.size() * 100));
}

std::uint64_t unlimited(const fs::path&) { return ~0ULL; }

/// Brute-force nearest rank: the smallest value with at least p% of the list
/// at or below it.
double order_statistic(const std::vector<double>& xs, double p) {
  const double n = static_cast<double>(xs.size());
  double best = 0;
  bool found = false;
  for (double c : xs) {
    double below = 0;
    for (double x : xs) below += x <= c;
    if (below * 100.0 >= p * n && (!found || c < best)) {
      best = c;
      found = true;
    }
  }
  return best;
}

ProcessOutcome bf(const std::vector<std::string>& args, const fs::path& cwd) {
  ProcessSpec spec;
  spec.argv = {bftest::bf_exe().string()};
  spec.argv.insert(spec.argv.end(), args.begin(), args.end());
  spec.cwd = cwd;
  spec.timeout = std::chrono::minutes(4);
  return run_process(spec);
}

// ---------------------------------------------------------------------------

void dsl_plan_fidelity(Check& c) {
  auto path = bftest::source_dir() / "experiments" / "hadoop.yaml";
  auto def = parse_definition(read_file(path));
  auto registry = resolve_registry(def, path.parent_path());
  c.expect(def.groups.size() == 2, "groups=" + str(def.groups.size()));
  std::int64_t machines = 0;
  for (const auto& g : def.groups) machines += g.size;
  c.expect(machines == 3, "declared machines=" + str(machines));
  auto plan = make_plan(def, registry);
  c.expect(plan.dag.machines.machines.size() == 3, "planned machines=" + str(plan.dag.machines.machines.size()));
  std::vector<std::vector<std::string>> stages;
  for (const auto& s : plan.stages) {
    stages.emplace_back();
    for (auto i : s) stages.back().push_back(plan.dag.nodes[i].recipe);
  }
  const std::vector<std::vector<std::string>> want = {{"hadoop::nn"}, {"hadoop::dn", "hadoop::dn"}};
  c.expect(stages == want, "stages=" + plan_json(plan)["stages"].dump());
}

void scheduler_safety(Check& c) {
  bftest::Rng rng(2016);
  std::size_t runs = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto dag = bftest::random_task_dag(rng, 50);
    for (std::size_t p : {1u, 2u, 8u}) {
      bftest::FakeExecutor exec;
      ExecuteOptions opt;
      opt.parallelism = p;
      auto rec = execute(dag, exec, opt);
      auto audit = bftest::audit_schedule(dag, rec);
      const auto tag = "dag " + str(trial) + " p=" + str(p) + ": ";
      c.expect(rec.phase == RunPhase::done, tag + "phase " + std::string(run_phase_name(rec.phase)));
      c.expect(audit.order_violations == 0, tag + str(audit.order_violations) + " order violations " + audit.first_problem);
      c.expect(audit.max_concurrency <= p, tag + "recorded concurrency " + str(audit.max_concurrency));
      c.expect(static_cast<std::size_t>(exec.peak()) <= p, tag + "observed concurrency " + str(exec.peak()));
      c.expect(static_cast<std::size_t>(exec.calls()) == dag.nodes.size(), tag + "calls " + str(exec.calls()));
      ++runs;
    }
  }
  c.expect(runs == 1500, "executions=" + str(runs));
}

void record_file_law(Check& c) {
  bftest::TempDir tmp;
  for (std::uint64_t n : {0ULL, 1ULL, 1000ULL, 1000000ULL}) {
    auto f = gen_records(n, 42, tmp / "records");
    auto size = fs::file_size(f.path);
    c.expect(size == 100 * n, "n=" + str(n) + " size=" + str(size));
    c.expect(f.record_count == n, "n=" + str(n) + " count=" + str(f.record_count));
  }
}

void sort_oracle(Check& c) {
  bftest::TempDir tmp;
  auto in = gen_records(1000000, 7, tmp / "big");
  auto before = digest_record_file(in);
  auto res = external_sort(in, 16ULL << 20, tmp / "spill", tmp / "big.sorted", unlimited);
  auto after = digest_record_file(res.output);
  c.expect(fs::file_size(res.output.path) == 100000000ULL, "output size " + str(fs::file_size(res.output.path)));
  c.expect(after.records == 1000000, "output records " + str(after.records));
  c.expect(after.key_sorted, "output not key-monotone");
  c.expect(after.multiset_hash == before.multiset_hash, "multiset hash differs");
  c.expect(res.runs > 1, "expected spilled runs, got " + str(res.runs));
  fs::remove(in.path);
  fs::remove(res.output.path);

  bftest::Rng rng(11);
  std::vector<std::uint64_t> sizes = {0, 1, 2, 100, 10000};
  for (int i = 0; i < 25; ++i) sizes.push_back(static_cast<std::uint64_t>(rng.between(0, 10000)));
  for (std::size_t trial = 0; trial < sizes.size(); ++trial) {
    auto n = sizes[trial];
    auto small = gen_records(n, 100 + trial, tmp / "small");
    auto recs = load_records(small.path);
    if (trial % 3 == 1) std::sort(recs.begin(), recs.end());
    if (trial % 3 == 2) std::sort(recs.rbegin(), recs.rend());
    if (trial % 4 == 3 && n > 3) {
      std::memcpy(recs[1].data(), recs[0].data(), 10);  // equal keys, distinct payloads
      recs[2] = recs[0];
    }
    store_records(small.path, recs);
    auto oracle = recs;
    std::sort(oracle.begin(), oracle.end());
    auto out = external_sort(open_record_file(small.path), 16ULL << 20, tmp / "spill", tmp / "small.sorted", unlimited);
    c.expect(load_records(out.output.path) == oracle, "n=" + str(n) + " differs from in-memory oracle");
  }
}

void storage_preflight(Check& c) {
  c.expect(storage_requirement(200000000000ULL) == 800000000000ULL,
           "requirement=" + str(storage_requirement(200000000000ULL)));
  bftest::TempDir tmp;
  auto below = [](const fs::path&) -> std::uint64_t { return 800000000000ULL - 1; };
  auto exact = [](const fs::path&) -> std::uint64_t { return 800000000000ULL; };
  try {
    preflight_storage(200000000000ULL, tmp.path(), below);
    c.expect(false, "preflight accepted free space below the requirement");
  } catch (const InsufficientStorageError& e) {
    c.expect(e.shortfall() == 1, "shortfall=" + str(e.shortfall()));
    c.expect(e.required() == 800000000000ULL, "required=" + str(e.required()));
  }
  try {
    preflight_storage(200000000000ULL, tmp.path(), exact);
  } catch (const Error& e) {
    c.expect(false, std::string("preflight refused exact requirement: ") + e.what());
  }

  BatchParams params;
  params.records = 1000;
  params.work_dir = tmp / "work";
  auto none = [](const fs::path&) -> std::uint64_t { return 399999; };
  try {
    run_batch_experiment(params, none);
    c.expect(false, "batch run started without storage");
  } catch (const InsufficientStorageError& e) {
    c.expect(e.required() == 400000, "batch required=" + str(e.required()));
  }
  bool wrote = fs::exists(params.work_dir) && !fs::is_empty(params.work_dir);
  c.expect(!wrote, "refused run wrote data");
}

StreamParams stream_params(std::uint32_t rate, const fs::path& out) {
  StreamParams p;
  p.rate = rate;
  p.duration_s = 10;
  p.window_ms = 1000;
  p.out_dir = out;
  fs::create_directories(out);
  return p;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

void streaming_semantics(Check& c) {
  bftest::TempDir tmp;
  for (std::uint32_t rate = 1000; rate <= 10000; rate += 1000) {
    const auto tag = "rate " + str(rate) + ": ";
    auto params = stream_params(rate, tmp / str(rate));
    auto res = run_stream_experiment(params);

    const double target = static_cast<double>(rate) * params.duration_s;
    if (rate <= 4000)
      c.expect(std::abs(static_cast<double>(res.emitted) - target) <= 0.05 * target, tag + "emitted " + str(res.emitted));

    auto events = parse_event_log(read_file(params.out_dir / "events.csv"));
    auto rows = parse_store_dump(read_file(params.out_dir / "store.csv"));
    auto campaigns = generate_campaigns(params.num_campaigns, params.ads_per_campaign, params.seed);
    std::map<std::pair<std::string, std::int64_t>, std::uint64_t> oracle;
    for (const auto& e : events) {
      const auto* campaign = campaigns.campaign_of(e.ad_id);
      if (!campaign) continue;
      ++oracle[{*campaign, floor_div(e.event_time_ms, params.window_ms) * params.window_ms}];
    }
    std::map<std::pair<std::string, std::int64_t>, std::uint64_t> stored;
    for (const auto& r : rows) stored[{r.campaign, r.window_start}] += r.count;
    c.expect(stored == oracle, tag + "per-window counts differ from group-by (" + str(stored.size()) + " vs " +
                                   str(oracle.size()) + " windows)");
    c.expect(events.size() + res.dropped == res.emitted, tag + "event log size " + str(events.size()));

    std::vector<double> recomputed;
    for (const auto& r : rows)
      if (r.last_emit_ms && r.write_ms) recomputed.push_back(static_cast<double>(*r.write_ms - *r.last_emit_ms));
    c.expect(recomputed.size() == res.latencies_ms.size(), tag + "latency count " + str(res.latencies_ms.size()));
    for (auto l : res.latencies_ms) c.expect(l >= 0, tag + "negative latency " + str(l));
    if (recomputed.empty() || res.latencies_ms.empty()) {
      c.expect(false, tag + "no latencies");
      continue;
    }
    std::vector<double> reported(res.latencies_ms.begin(), res.latencies_ms.end());
    std::sort(recomputed.begin(), recomputed.end());
    auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(recomputed.size())));
    double p99 = recomputed[std::max<std::size_t>(rank, 1) - 1];
    c.expect(percentile(reported, 99) == p99, tag + "p99 " + str(percentile(reported, 99)) + " vs " + str(p99));
  }
}

void backpressure_trend(Check& c) {
  bftest::TempDir tmp;
  std::map<std::uint32_t, double> p99;
  for (std::uint32_t rate : {1000u, 10000u}) {
    auto params = stream_params(rate, tmp / str(rate));
    params.queue_capacity = 10000;
    params.processor_eps = 5000;
    auto res = run_stream_experiment(params);
    std::vector<double> xs(res.latencies_ms.begin(), res.latencies_ms.end());
    if (xs.empty()) {
      c.expect(false, "rate " + str(rate) + ": no latencies");
      return;
    }
    p99[rate] = percentile(xs, 99);
  }
  c.expect(p99[10000] > p99[1000], "p99 at 10000/s = " + str(p99[10000]) + " ms, at 1000/s = " + str(p99[1000]) + " ms");
  std::cout << "  p99 latency: " << p99[1000] << " ms at 1000/s, " << p99[10000] << " ms at 10000/s\n";
}

void percentile_oracle(Check& c) {
  bftest::Rng rng(99);
  for (int list = 0; list < 200; ++list) {
    auto n = static_cast<std::size_t>(rng.between(1, 300));
    std::vector<double> xs(n);
    const bool coarse = rng.chance(0.5);
    for (auto& x : xs) x = coarse ? static_cast<double>(rng.between(0, 20)) : rng.real(-1e6, 1e6);
    for (double p : {0.0, 1.0, 50.0, 90.0, 99.0, 100.0}) {
      auto got = percentile(xs, p);
      auto want = order_statistic(xs, p);
      c.expect(got == want, "list " + str(list) + " p=" + str(p) + ": " + str(got) + " vs " + str(want));
    }
  }
}

void monitor_lifecycle(Check& c) {
  Machine local{"local-0", "local", 0, "host", "local", ""};
  MonitorFleet fleet;
  auto h = fleet.start_monitor(local, 1000);
  std::this_thread::sleep_for(std::chrono::seconds(10));
  auto series = fleet.stop_monitor(h);
  c.expect(series.samples.size() >= 9 && series.samples.size() <= 11, "samples=" + str(series.samples.size()));

  bftest::TempDir tmp;
  auto files = generate_reports(series, tmp / "reports");
  c.expect(files.size() == 4, "report pairs=" + str(files.size()));
  for (const auto& f : files) c.expect(fs::exists(f.csv) && fs::exists(f.svg), "missing report " + f.name);
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(tmp / "reports")) on_disk += e.is_regular_file();
  c.expect(on_disk == 8, "files written=" + str(on_disk));

  SyntheticWave wave;
  wave.reset_every = 3;
  MonitorFleet resets([wave](const Machine&) { return std::make_unique<SyntheticSource>(wave); });
  auto rh = resets.start_monitor(local, 100);
  std::this_thread::sleep_for(std::chrono::milliseconds(2000));
  auto reset_series = resets.stop_monitor(rh);
  c.expect(reset_series.samples.size() >= 15, "reset samples=" + str(reset_series.samples.size()));
  for (const auto& s : reset_series.samples) {
    c.expect(s.disk_read_bps >= 0 && s.disk_write_bps >= 0, "negative disk rate at " + str(s.t_ms));
    c.expect(s.net_rx_bps >= 0 && s.net_tx_bps >= 0, "negative network rate at " + str(s.t_ms));
    c.expect(s.cpu_pct >= 0, "negative cpu at " + str(s.t_ms));
  }

  bftest::Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    CounterSnapshot a, b;
    for (auto* s : {&a, &b}) {
      s->cpu_total = static_cast<std::uint64_t>(rng.between(0, 1 << 20));
      s->cpu_busy = static_cast<std::uint64_t>(rng.between(0, static_cast<std::int64_t>(s->cpu_total)));
      s->disk_read_bytes = static_cast<std::uint64_t>(rng.between(0, 1 << 30));
      s->disk_write_bytes = static_cast<std::uint64_t>(rng.between(0, 1 << 30));
      s->net_rx_bytes = static_cast<std::uint64_t>(rng.between(0, 1 << 30));
      s->net_tx_bytes = static_cast<std::uint64_t>(rng.between(0, 1 << 30));
      s->mem_total = 1 << 30;
      s->mem_available = static_cast<std::uint64_t>(rng.between(0, 1 << 30));
    }
    double load = 0;
    auto s = derive_sample(a, b, rng.real(0.1, 2.0), 0, load);
    c.expect(s.cpu_pct >= 0 && s.disk_read_bps >= 0 && s.disk_write_bps >= 0 && s.net_rx_bps >= 0 && s.net_tx_bps >= 0,
             "negative rate for random counters, case " + str(i));
  }
}

void end_to_end(Check& c) {
  bftest::TempDir tmp;
  const auto def = (bftest::source_dir() / "experiments" / "batch.yaml").string();
  struct Launch {
    std::string id;
    std::vector<std::string> extra;
  };
  for (const auto& run : {Launch{"flink", {"--set", "terasort.engine=flink"}}, Launch{"hadoop", {"--set", "terasort.engine=hadoop"}}}) {
    std::vector<std::string> args = {"run", def, "--runs", "runs", "--run-id", run.id};
    args.insert(args.end(), run.extra.begin(), run.extra.end());
    auto out = bf(args, tmp.path());
    c.expect(out.exit_code == 0, run.id + ": bf run exited " + str(out.exit_code) + ": " + out.err);
    const auto dir = tmp / "runs" / run.id;
    if (!fs::exists(dir / "run.json")) {
      c.expect(false, run.id + ": no run.json");
      return;
    }
    auto rec = load_run_record(dir);
    c.expect(rec.phase == RunPhase::done, run.id + ": phase " + std::string(run_phase_name(rec.phase)));
    for (const auto& t : rec.tasks) c.expect(fs::exists(dir / t.log_ref) && !t.log_ref.empty(), run.id + ": no log for " + t.id);
    std::size_t csv = 0, svg = 0;
    for (const auto& r : rec.reports) {
      c.expect(fs::exists(dir / r), run.id + ": missing " + r);
      csv += fs::path(r).extension() == ".csv";
      svg += fs::path(r).extension() == ".svg";
    }
    c.expect(csv == 4 && svg == 4, run.id + ": reports csv=" + str(csv) + " svg=" + str(svg));
    bool found = false;
    for (const auto& m : rec.measurements) {
      if (m.kind != "batch") continue;
      found = true;
      auto br = BatchResult::from_json(m.data);
      c.expect(br.records == 1000000 && br.input_bytes == 100000000ULL, run.id + ": records " + str(br.records));
      c.expect(br.sorted, run.id + ": output not sorted");
      c.expect(br.engine == run.id, run.id + ": engine label " + br.engine);
    }
    c.expect(found, run.id + ": no BatchResult");
  }

  auto rep = bf({"report", "runs/flink", "runs/hadoop", "--out", "comparison"}, tmp.path());
  c.expect(rep.exit_code == 0, "bf report exited " + str(rep.exit_code) + ": " + rep.err);
  c.expect(fs::exists(tmp / "comparison" / "comparison.svg"), "no comparison.svg");
  if (!fs::exists(tmp / "comparison" / "comparison.csv")) {
    c.expect(false, "no comparison.csv");
    return;
  }
  auto table = read_file(tmp / "comparison" / "comparison.csv");
  c.expect(table.find("engine,x,y") != std::string::npos, "comparison header missing");
  c.expect(table.find("flink,100000000,") != std::string::npos, "no flink point");
  c.expect(table.find("hadoop,100000000,") != std::string::npos, "no hadoop point");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"dsl-plan-fidelity", 1, dsl_plan_fidelity},
      {"scheduler-safety", 120, scheduler_safety},
      {"record-file-law", 30, record_file_law},
      {"sort-oracle", 120, sort_oracle},
      {"storage-preflight", 5, storage_preflight},
      {"streaming-semantics", 300, streaming_semantics},
      {"backpressure-trend", 120, backpressure_trend},
      {"percentile-oracle", 10, percentile_oracle},
      {"monitor-lifecycle", 60, monitor_lifecycle},
      {"end-to-end", 300, end_to_end},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    auto start = Clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    check.expect(elapsed < cr.budget_s, "took " + str(elapsed) + " s, budget " + str(cr.budget_s) + " s");
    std::cout << (check.ok() ? "PASS " : "FAIL ") << cr.name << " (" << std::fixed << std::setprecision(2) << elapsed
              << " s)" << std::defaultfloat;
    if (!check.ok()) std::cout << ": " << check.summary();
    std::cout << std::endl;
    failed += !check.ok();
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
