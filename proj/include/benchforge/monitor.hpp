#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "benchforge/error.hpp"
#include "benchforge/executor.hpp"

namespace benchforge {

struct MetricSample {
  std::int64_t t_ms = 0;
  double cpu_pct = 0;
  double loadavg_5s = 0;
  std::uint64_t mem_used = 0;
  std::uint64_t mem_free = 0;
  double disk_read_bps = 0;
  double disk_write_bps = 0;
  double net_rx_bps = 0;
  double net_tx_bps = 0;
  std::optional<double> cpu_mhz;

  friend bool operator==(const MetricSample&, const MetricSample&) = default;
};

struct MetricSeries {
  std::string machine;
  std::int64_t interval_ms = 1000;
  std::vector<MetricSample> samples;
  std::int64_t sampler_cpu_us = 0;  // CPU time spent by the sampling thread
};

/// Raw cumulative counters at one instant.
struct CounterSnapshot {
  std::uint64_t cpu_busy = 0;  // jiffies
  std::uint64_t cpu_total = 0;
  std::uint32_t runnable = 0;
  std::uint64_t mem_total = 0;
  std::uint64_t mem_available = 0;
  std::uint64_t disk_read_bytes = 0;
  std::uint64_t disk_write_bytes = 0;
  std::uint64_t net_rx_bytes = 0;
  std::uint64_t net_tx_bytes = 0;
  std::optional<double> cpu_mhz;
};

class MetricSource {
 public:
  virtual ~MetricSource() = default;
  /// Throws Error when the underlying counters cannot be read.
  virtual CounterSnapshot read() = 0;
};

/// Linux kernel counters (/proc/stat, meminfo, diskstats, net/dev, cpuinfo)
/// fetched through `reader`, which defaults to the local filesystem.
class ProcfsSource final : public MetricSource {
 public:
  using Reader = std::function<std::string(const std::string& path)>;
  explicit ProcfsSource(Reader reader = {});
  CounterSnapshot read() override;

 private:
  Reader reader_;
};

struct SyntheticWave {
  double cpu_base_pct = 40;
  double cpu_amplitude_pct = 20;
  std::uint32_t period_reads = 10;
  std::uint32_t runnable = 2;
  std::uint64_t mem_total = 16ULL << 30;
  std::uint64_t mem_used_base = 4ULL << 30;
  std::uint64_t disk_bytes_per_read = 1 << 20;
  std::uint64_t net_bytes_per_read = 1 << 19;
  /// Counters drop back to zero every `reset_every` reads (0: never).
  std::uint32_t reset_every = 0;
};

/// Deterministic waveform source for tests; each read advances one step.
class SyntheticSource final : public MetricSource {
 public:
  explicit SyntheticSource(SyntheticWave wave = {});
  CounterSnapshot read() override;

 private:
  SyntheticWave wave_;
  std::uint64_t step_ = 0;
  CounterSnapshot acc_;
};

CounterSnapshot parse_proc_counters(std::string_view stat, std::string_view meminfo,
                                    std::string_view diskstats, std::string_view netdev,
                                    std::string_view cpuinfo = {});

/// Converts two counter readings `dt_s` apart into a sample. A counter that
/// went backwards contributes a rate of 0. `load` carries the 5-second
/// exponentially weighted runnable-task average and is updated in place.
MetricSample derive_sample(const CounterSnapshot& prev, const CounterSnapshot& cur, double dt_s,
                           std::int64_t t_ms, double& load);

struct MonitorHandle {
  std::uint64_t id = 0;
  std::string machine;
};

inline constexpr std::int64_t kMinMonitorIntervalMs = 100;

/// Background samplers, one per machine.
class MonitorFleet {
 public:
  using SourceFactory = std::function<std::unique_ptr<MetricSource>(const Machine&)>;

  /// Default factory: ProcfsSource reading through `executor` if given,
  /// else the local /proc.
  explicit MonitorFleet(SourceFactory factory = {});
  ~MonitorFleet();
  MonitorFleet(const MonitorFleet&) = delete;
  MonitorFleet& operator=(const MonitorFleet&) = delete;

  /// Throws Error when the interval is below 100 ms, the machine is already
  /// monitored, or the metric source is unreadable.
  MonitorHandle start_monitor(const Machine& machine, std::int64_t interval_ms);

  /// Stops sampling and returns the complete series. A final sample is taken
  /// when at least half an interval has passed since the last one, or when
  /// the series is still empty. Throws Error for an unknown or closed handle.
  MetricSeries stop_monitor(const MonitorHandle& handle);

  /// Copy of the samples collected so far (empty when not monitored).
  std::optional<MetricSeries> snapshot(std::string_view machine) const;

  bool is_monitoring(std::string_view machine) const;

 private:
  struct Session;

  SourceFactory factory_;
  mutable std::mutex mutex_;
  std::uint64_t next_id_ = 1;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
};

/// Default source factory for an executor's machines.
MonitorFleet::SourceFactory procfs_sources(Executor* executor = nullptr);

/// Full series CSV: `t_ms,cpu_pct,loadavg_5s,mem_used,mem_free,disk_read_bps,disk_write_bps,net_rx_bps,net_tx_bps`.
inline constexpr std::string_view kMetricsCsvHeader =
    "t_ms,cpu_pct,loadavg_5s,mem_used,mem_free,disk_read_bps,disk_write_bps,net_rx_bps,net_tx_bps";

std::string sample_csv_line(const MetricSample& s);
std::string series_csv(const MetricSeries& series);
MetricSeries parse_series_csv(std::string_view text, std::string machine = {});

struct ReportFiles {
  std::string name;  // cpu | memory | disk | network
  std::filesystem::path csv;
  std::filesystem::path svg;
};

/// Writes {cpu,memory,disk,network}.{csv,svg} under `out`. Throws Error on an
/// empty series and IoError on an unwritable directory.
std::vector<ReportFiles> generate_reports(const MetricSeries& series, const std::filesystem::path& out);

}  // namespace benchforge
