#include "benchforge/monitor.hpp"

#include <time.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "benchforge/svg.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> fields(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string f;
  while (in >> f) out.push_back(f);
  return out;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

std::uint64_t counter_delta_ok(std::uint64_t prev, std::uint64_t cur, bool& ok) {
  ok = cur >= prev;
  return ok ? cur - prev : 0;
}

double rate(std::uint64_t prev, std::uint64_t cur, double dt_s) {
  bool ok = false;
  auto d = counter_delta_ok(prev, cur, ok);
  if (!ok || dt_s <= 0) return 0;
  return static_cast<double>(d) / dt_s;
}

bool is_partition(const std::string& name, const std::set<std::string>& all) {
  for (const auto& other : all) {
    if (other.size() >= name.size() || !starts_with(name, other)) continue;
    std::string_view rest = std::string_view(name).substr(other.size());
    if (!rest.empty() && rest.front() == 'p') rest.remove_prefix(1);
    if (!rest.empty() && std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return true;
  }
  return false;
}

}  // namespace

CounterSnapshot parse_proc_counters(std::string_view stat, std::string_view meminfo,
                                    std::string_view diskstats, std::string_view netdev,
                                    std::string_view cpuinfo) {
  CounterSnapshot c;
  bool have_cpu = false;
  for (const auto& line : split(stat, '\n')) {
    auto f = fields(line);
    if (f.empty()) continue;
    if (f[0] == "cpu" && f.size() >= 5) {
      std::uint64_t total = 0;
      for (std::size_t i = 1; i < f.size() && i <= 8; ++i) total += to_u64(f[i]);
      std::uint64_t idle = to_u64(f[4]) + (f.size() > 5 ? to_u64(f[5]) : 0);
      c.cpu_total = total;
      c.cpu_busy = total - std::min(total, idle);
      have_cpu = true;
    } else if (f[0] == "procs_running" && f.size() >= 2) {
      c.runnable = static_cast<std::uint32_t>(to_u64(f[1]));
    }
  }
  if (!have_cpu) throw Error("no aggregate cpu line in /proc/stat");

  std::uint64_t mem_free = 0;
  bool have_available = false;
  for (const auto& line : split(meminfo, '\n')) {
    auto f = fields(line);
    if (f.size() < 2) continue;
    if (f[0] == "MemTotal:") c.mem_total = to_u64(f[1]) * 1024;
    else if (f[0] == "MemAvailable:") c.mem_available = to_u64(f[1]) * 1024, have_available = true;
    else if (f[0] == "MemFree:") mem_free = to_u64(f[1]) * 1024;
  }
  if (!have_available) c.mem_available = mem_free;
  c.mem_available = std::min(c.mem_available, c.mem_total);

  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> disks;
  std::set<std::string> names;
  for (const auto& line : split(diskstats, '\n')) {
    auto f = fields(line);
    if (f.size() < 10) continue;
    const auto& name = f[2];
    if (starts_with(name, "loop") || starts_with(name, "ram") || starts_with(name, "zram")) continue;
    names.insert(name);
    disks[name] = {to_u64(f[5]) * 512, to_u64(f[9]) * 512};
  }
  for (const auto& [name, rw] : disks) {
    if (is_partition(name, names)) continue;
    c.disk_read_bytes += rw.first;
    c.disk_write_bytes += rw.second;
  }

  for (const auto& line : split(netdev, '\n')) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto iface = trim(line.substr(0, colon));
    if (iface == "lo" || iface.empty()) continue;
    auto f = fields(line.substr(colon + 1));
    if (f.size() < 9) continue;
    c.net_rx_bytes += to_u64(f[0]);
    c.net_tx_bytes += to_u64(f[8]);
  }

  double mhz_sum = 0;
  int mhz_n = 0;
  for (const auto& line : split(cpuinfo, '\n')) {
    if (!starts_with(line, "cpu MHz")) continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto v = trim(line.substr(colon + 1));
    double mhz = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), mhz);
    if (ec == std::errc{}) mhz_sum += mhz, ++mhz_n;
  }
  if (mhz_n > 0) c.cpu_mhz = mhz_sum / mhz_n;
  return c;
}

ProcfsSource::ProcfsSource(Reader reader) : reader_(std::move(reader)) {
  if (!reader_) reader_ = [](const std::string& p) { return read_file(p); };
}

CounterSnapshot ProcfsSource::read() {
  auto optional_read = [&](const std::string& p) {
    try {
      return reader_(p);
    } catch (const Error&) {
      return std::string{};
    }
  };
  std::string stat, meminfo;
  try {
    stat = reader_("/proc/stat");
    meminfo = reader_("/proc/meminfo");
  } catch (const Error& e) {
    throw Error(std::string("metric source unreadable: ") + e.what());
  }
  return parse_proc_counters(stat, meminfo, optional_read("/proc/diskstats"),
                             optional_read("/proc/net/dev"), optional_read("/proc/cpuinfo"));
}

SyntheticSource::SyntheticSource(SyntheticWave wave) : wave_(wave) {}

CounterSnapshot SyntheticSource::read() {
  ++step_;
  if (wave_.reset_every && step_ % wave_.reset_every == 0) acc_ = {};
  double phase = 2 * std::numbers::pi * static_cast<double>(step_) / std::max(1u, wave_.period_reads);
  double busy_pct = std::clamp(wave_.cpu_base_pct + wave_.cpu_amplitude_pct * std::sin(phase), 0.0, 100.0);
  acc_.cpu_total += 1000;
  acc_.cpu_busy += static_cast<std::uint64_t>(std::llround(busy_pct * 10));
  acc_.runnable = wave_.runnable;
  acc_.mem_total = wave_.mem_total;
  auto used = std::min<std::uint64_t>(wave_.mem_total, wave_.mem_used_base + static_cast<std::uint64_t>(step_ % 8) * (64ULL << 20));
  acc_.mem_available = wave_.mem_total - used;
  acc_.disk_read_bytes += wave_.disk_bytes_per_read;
  acc_.disk_write_bytes += wave_.disk_bytes_per_read * 2;
  acc_.net_rx_bytes += wave_.net_bytes_per_read;
  acc_.net_tx_bytes += wave_.net_bytes_per_read / 2;
  return acc_;
}

MetricSample derive_sample(const CounterSnapshot& prev, const CounterSnapshot& cur, double dt_s,
                           std::int64_t t_ms, double& load) {
  MetricSample s;
  s.t_ms = t_ms;
  bool busy_ok = false, total_ok = false;
  auto dbusy = counter_delta_ok(prev.cpu_busy, cur.cpu_busy, busy_ok);
  auto dtotal = counter_delta_ok(prev.cpu_total, cur.cpu_total, total_ok);
  if (busy_ok && total_ok && dtotal > 0)
    s.cpu_pct = std::clamp(100.0 * static_cast<double>(dbusy) / static_cast<double>(dtotal), 0.0, 100.0);
  double decay = std::exp(-std::max(dt_s, 0.0) / 5.0);
  load = load * decay + static_cast<double>(cur.runnable) * (1 - decay);
  s.loadavg_5s = load;
  s.mem_free = std::min(cur.mem_total, cur.mem_available);
  s.mem_used = cur.mem_total - std::min(cur.mem_total, cur.mem_available);
  s.disk_read_bps = rate(prev.disk_read_bytes, cur.disk_read_bytes, dt_s);
  s.disk_write_bps = rate(prev.disk_write_bytes, cur.disk_write_bytes, dt_s);
  s.net_rx_bps = rate(prev.net_rx_bytes, cur.net_rx_bytes, dt_s);
  s.net_tx_bps = rate(prev.net_tx_bytes, cur.net_tx_bytes, dt_s);
  s.cpu_mhz = cur.cpu_mhz;
  return s;
}

struct MonitorFleet::Session {
  std::uint64_t id = 0;
  Machine machine;
  std::int64_t interval_ms = 1000;
  std::unique_ptr<MetricSource> source;
  mutable std::mutex mutex;
  std::condition_variable_any cv;
  MetricSeries series;
  std::jthread thread;

  void run(std::stop_token stop, CounterSnapshot baseline) {
    using namespace std::chrono;
    const auto t0 = MonoClock::now();
    const auto wall0 = wall_ms();
    const auto interval = milliseconds(interval_ms);
    auto prev = baseline;
    auto prev_t = t0;
    double load = baseline.runnable;
    auto take_sample = [&](MonoClock::time_point now) {
      CounterSnapshot cur;
      try {
        cur = source->read();
      } catch (const Error&) {
        return;
      }
      double dt = duration<double>(now - prev_t).count();
      auto t_ms = wall0 + duration_cast<milliseconds>(now - t0).count();
      auto sample = derive_sample(prev, cur, dt, t_ms, load);
      {
        std::lock_guard lock(mutex);
        if (series.samples.empty() || series.samples.back().t_ms < t_ms) series.samples.push_back(sample);
      }
      prev = cur;
      prev_t = now;
    };
    std::int64_t k = 1;
    while (true) {
      {
        std::unique_lock lock(mutex);
        if (cv.wait_until(lock, stop, t0 + k * interval, [] { return false; }) || stop.stop_requested()) break;
      }
      auto now = MonoClock::now();
      take_sample(now);
      k = (now - t0) / interval + 1;
    }
    // final flush, unless the last sample is too recent to give a meaningful rate;
    // a session without samples always gets one
    bool empty;
    {
      std::lock_guard lock(mutex);
      empty = series.samples.empty();
    }
    auto now = MonoClock::now();
    if (now - prev_t >= interval / 2 || (empty && now - prev_t >= milliseconds(1))) take_sample(now);
    timespec ts{};
    ::clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    std::lock_guard lock(mutex);
    series.sampler_cpu_us = static_cast<std::int64_t>(ts.tv_sec) * 1000000 + ts.tv_nsec / 1000;
  }
};

MonitorFleet::SourceFactory procfs_sources(Executor* executor) {
  return [executor](const Machine& m) -> std::unique_ptr<MetricSource> {
    if (!executor) return std::make_unique<ProcfsSource>();
    return std::make_unique<ProcfsSource>(
        [executor, m](const std::string& p) { return executor->read_machine_file(m, p); });
  };
}

MonitorFleet::MonitorFleet(SourceFactory factory) : factory_(std::move(factory)) {
  if (!factory_) factory_ = procfs_sources(nullptr);
}

MonitorFleet::~MonitorFleet() {
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions.swap(sessions_);
  }
  for (auto& [id, s] : sessions) {
    s->thread.request_stop();
    if (s->thread.joinable()) s->thread.join();
  }
}

MonitorHandle MonitorFleet::start_monitor(const Machine& machine, std::int64_t interval_ms) {
  if (interval_ms < kMinMonitorIntervalMs)
    throw Error("interval too small: " + std::to_string(interval_ms) + " ms (minimum " +
                std::to_string(kMinMonitorIntervalMs) + " ms)");
  std::lock_guard lock(mutex_);
  if (sessions_.count(machine.id)) throw Error("already monitoring " + machine.id);
  auto session = std::make_shared<Session>();
  session->id = next_id_++;
  session->machine = machine;
  session->interval_ms = interval_ms;
  session->source = factory_(machine);
  session->series.machine = machine.id;
  session->series.interval_ms = interval_ms;
  auto baseline = session->source->read();
  session->thread = std::jthread([s = session.get(), baseline](std::stop_token st) { s->run(st, baseline); });
  sessions_.emplace(machine.id, session);
  return {session->id, machine.id};
}

MetricSeries MonitorFleet::stop_monitor(const MonitorHandle& handle) {
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(handle.machine);
    if (it == sessions_.end() || it->second->id != handle.id)
      throw Error("unknown or closed monitor handle for " + handle.machine);
    session = it->second;
    sessions_.erase(it);
  }
  session->thread.request_stop();
  session->thread.join();
  std::lock_guard lock(session->mutex);
  return session->series;
}

std::optional<MetricSeries> MonitorFleet::snapshot(std::string_view machine) const {
  std::shared_ptr<Session> session;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(machine);
    if (it == sessions_.end()) return std::nullopt;
    session = it->second;
  }
  std::lock_guard lock(session->mutex);
  return session->series;
}

bool MonitorFleet::is_monitoring(std::string_view machine) const {
  std::lock_guard lock(mutex_);
  return sessions_.find(machine) != sessions_.end();
}

std::string sample_csv_line(const MetricSample& s) {
  std::string line = std::to_string(s.t_ms);
  for (double v : {s.cpu_pct, s.loadavg_5s}) line += "," + format_double(v);
  line += "," + std::to_string(s.mem_used) + "," + std::to_string(s.mem_free);
  for (double v : {s.disk_read_bps, s.disk_write_bps, s.net_rx_bps, s.net_tx_bps})
    line += "," + format_double(v);
  return line;
}

std::string series_csv(const MetricSeries& series) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& s : series.samples) out += sample_csv_line(s) + "\n";
  return out;
}

namespace {

double to_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError("bad number '" + s + "'");
  return v;
}

std::int64_t to_i64(const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError("bad integer '" + s + "'");
  return v;
}

}  // namespace

MetricSeries parse_series_csv(std::string_view text, std::string machine) {
  MetricSeries series;
  series.machine = std::move(machine);
  auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != kMetricsCsvHeader) throw ParseError("metrics CSV header mismatch");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 9) throw ParseError("metrics CSV row needs 9 columns", i + 1, 1);
    MetricSample s;
    s.t_ms = to_i64(f[0]);
    s.cpu_pct = to_double(f[1]);
    s.loadavg_5s = to_double(f[2]);
    s.mem_used = static_cast<std::uint64_t>(to_i64(f[3]));
    s.mem_free = static_cast<std::uint64_t>(to_i64(f[4]));
    s.disk_read_bps = to_double(f[5]);
    s.disk_write_bps = to_double(f[6]);
    s.net_rx_bps = to_double(f[7]);
    s.net_tx_bps = to_double(f[8]);
    series.samples.push_back(s);
  }
  if (series.samples.size() >= 2) series.interval_ms = series.samples[1].t_ms - series.samples[0].t_ms;
  return series;
}

std::vector<ReportFiles> generate_reports(const MetricSeries& series, const fs::path& out) {
  if (series.samples.empty()) throw Error("cannot generate reports from an empty series");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());

  const auto t0 = series.samples.front().t_ms;
  bool have_mhz = std::all_of(series.samples.begin(), series.samples.end(),
                              [](const auto& s) { return s.cpu_mhz.has_value(); });
  struct Column {
    std::string name;
    std::function<std::string(const MetricSample&)> text;
    std::function<double(const MetricSample&)> value;
  };
  auto dcol = [](std::string name, double MetricSample::*m) {
    return Column{name, [m](const MetricSample& s) { return format_double(s.*m); },
                  [m](const MetricSample& s) { return s.*m; }};
  };
  auto ucol = [](std::string name, std::uint64_t MetricSample::*m) {
    return Column{name, [m](const MetricSample& s) { return std::to_string(s.*m); },
                  [m](const MetricSample& s) { return static_cast<double>(s.*m); }};
  };
  struct Report {
    std::string name, title, unit;
    std::vector<Column> columns;
  };
  std::vector<Report> reports{
      {"cpu", "CPU utilisation", "percent / load", {dcol("cpu_pct", &MetricSample::cpu_pct),
                                                    dcol("loadavg_5s", &MetricSample::loadavg_5s)}},
      {"memory", "Memory utilisation", "bytes", {ucol("mem_used", &MetricSample::mem_used),
                                                ucol("mem_free", &MetricSample::mem_free)}},
      {"disk", "Disk throughput", "bytes/s", {dcol("disk_read_bps", &MetricSample::disk_read_bps),
                                             dcol("disk_write_bps", &MetricSample::disk_write_bps)}},
      {"network", "Network throughput", "bytes/s", {dcol("net_rx_bps", &MetricSample::net_rx_bps),
                                                   dcol("net_tx_bps", &MetricSample::net_tx_bps)}},
  };
  if (have_mhz)
    reports[0].columns.push_back({"cpu_mhz", [](const MetricSample& s) { return format_double(*s.cpu_mhz); },
                                  [](const MetricSample& s) { return *s.cpu_mhz; }});

  std::vector<ReportFiles> files;
  for (const auto& r : reports) {
    std::string csv = "t_ms";
    for (const auto& c : r.columns) csv += "," + c.name;
    csv += '\n';
    ChartSpec chart{r.title + " (" + series.machine + ")", "time (s)", r.unit, {}};
    for (const auto& c : r.columns) chart.series.push_back({c.name, {}});
    for (const auto& s : series.samples) {
      csv += std::to_string(s.t_ms);
      double x = static_cast<double>(s.t_ms - t0) / 1000.0;
      for (std::size_t i = 0; i < r.columns.size(); ++i) {
        csv += "," + r.columns[i].text(s);
        chart.series[i].points.emplace_back(x, r.columns[i].value(s));
      }
      csv += '\n';
    }
    ReportFiles f{r.name, out / (r.name + ".csv"), out / (r.name + ".svg")};
    write_file(f.csv, csv);
    write_file(f.svg, render_line_chart(chart));
    files.push_back(std::move(f));
  }
  return files;
}

}  // namespace benchforge
