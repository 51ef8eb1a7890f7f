#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "benchforge/error.hpp"

namespace benchforge {

struct CampaignSet {
  std::vector<std::string> campaigns;
  std::uint32_t ads_per_campaign = 0;
  std::vector<std::string> ads;
  std::unordered_map<std::string, std::size_t> ad_campaign;  // ad id -> index into campaigns

  const std::string* campaign_of(std::string_view ad) const;
};

enum class EventType { view, click, purchase };

std::string_view event_type_name(EventType t) noexcept;
std::optional<EventType> event_type_from_name(std::string_view s) noexcept;

struct AdEvent {
  std::uint64_t event_id = 0;
  std::string ad_id;
  std::int64_t event_time_ms = 0;
  std::int64_t emit_ms = 0;
  EventType type = EventType::view;
};

/// Aggregate for one (campaign, window) as stored by the processor.
struct WindowRow {
  std::string campaign;
  std::int64_t window_start = 0;
  std::uint64_t count = 0;
  std::optional<std::int64_t> last_emit_ms;
  std::optional<std::int64_t> write_ms;
};

/// Embedded key-value store standing in for the benchmark's Redis. Holds
/// campaign metadata as plain keys and window aggregates keyed by
/// (campaign, window_start). All members are thread-safe.
class KvStore {
 public:
  void set(std::string key, std::string value);
  std::optional<std::string> get(std::string_view key) const;
  std::size_t key_count() const;

  /// Inserts or merges a window row: counts add, timestamps keep the maximum.
  void write_window(const WindowRow& row);
  std::vector<WindowRow> window_rows() const;  // ordered by (campaign, window_start)

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string, std::less<>> kv_;
  std::map<std::pair<std::string, std::int64_t>, WindowRow> windows_;
};

/// Deterministic campaigns and ads; every ad belongs to exactly one campaign.
/// With a store, writes `ad:<id>` -> campaign and `campaign:<id>` -> ad count.
CampaignSet generate_campaigns(std::uint32_t num_campaigns, std::uint32_t ads_per_campaign,
                               std::uint64_t seed, KvStore* store = nullptr);

/// Bounded FIFO between generator and processor. A full queue refuses the
/// push instead of blocking.
class EventBus {
 public:
  explicit EventBus(std::size_t capacity);

  bool try_push(AdEvent event);
  /// Blocks until an event is available; nullopt once closed and drained.
  std::optional<AdEvent> pop();
  void close();
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<AdEvent> queue_;
  bool closed_ = false;
};

struct GeneratorReport {
  std::uint64_t emitted_count = 0;  // events sent, accepted or not
  std::uint64_t dropped = 0;        // refused by a full bus
  std::vector<AdEvent> events;      // accepted events in emit order
};

/// Token-bucket paced generator: `rate` events per second for `duration_s`
/// seconds, ads drawn uniformly. Closes the bus when finished.
GeneratorReport run_event_generator(const CampaignSet& campaigns, std::uint32_t rate, std::uint32_t duration_s,
                                    EventBus& sink, std::uint64_t seed = 1, std::stop_token stop = {});

struct ProcessingReport {
  std::uint64_t processed = 0;
  std::uint64_t unknown = 0;  // events whose ad is not in the campaign set
  std::uint64_t late = 0;     // events for windows already written
  std::uint64_t rows_written = 0;
};

/// Counts events per (campaign, window) and writes each window to the store
/// once the watermark (max event time minus window_ms) passes its end;
/// remaining windows are flushed when the bus closes. `processor_eps` > 0
/// caps consumption throughput.
ProcessingReport process_stream(EventBus& source, KvStore& store, std::int64_t window_ms,
                                std::uint32_t processor_eps = 0);

struct LatencyRecord {
  std::string campaign;
  std::int64_t window_start = 0;
  std::int64_t last_emit_ms = 0;
  std::int64_t write_ms = 0;
  std::int64_t latency_ms = 0;
};

struct LatencyReport {
  std::vector<LatencyRecord> records;
  std::size_t skipped = 0;  // rows without both timestamps
};

LatencyReport compute_latencies(const std::vector<WindowRow>& rows);
LatencyReport compute_latencies(const KvStore& store);

inline constexpr std::string_view kStoreDumpHeader = "campaign,window_start,count,last_emit_ms,write_ms";
inline constexpr std::string_view kEventLogHeader = "event_id,ad_id,event_time_ms,emit_ms,type";

std::string store_dump_csv(const std::vector<WindowRow>& rows);
std::vector<WindowRow> parse_store_dump(std::string_view csv);
std::string event_log_csv(const std::vector<AdEvent>& events);
std::vector<AdEvent> parse_event_log(std::string_view csv);

struct StreamParams {
  std::uint32_t num_campaigns = 100;
  std::uint32_t ads_per_campaign = 10;
  std::uint32_t rate = 1000;
  std::uint32_t duration_s = 10;
  std::int64_t window_ms = 10000;
  std::size_t queue_capacity = 10000;
  std::uint32_t processor_eps = 0;
  std::uint64_t seed = 42;
  std::string engine_label = "builtin";
  std::filesystem::path out_dir;  // when set, receives store.csv and events.csv
};

struct StreamResult {
  std::string engine;
  std::uint32_t rate = 0;
  std::uint32_t duration_s = 0;
  std::int64_t window_ms = 0;
  std::uint64_t emitted = 0;
  std::uint64_t dropped = 0;
  std::uint64_t processed = 0;
  std::uint64_t unknown = 0;
  std::uint64_t rows = 0;
  std::size_t skipped_rows = 0;
  std::vector<std::int64_t> latencies_ms;  // one per (campaign, window), store order
  std::vector<std::string> artifacts;       // dump files as written under out_dir

  nlohmann::json to_json() const;
  static StreamResult from_json(const nlohmann::json& j);
};

/// Generator and processor run concurrently over a bounded bus; latencies
/// are derived from the store once both finish.
StreamResult run_stream_experiment(const StreamParams& params, std::stop_token stop = {});

}  // namespace benchforge
