#include "benchforge/stream.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <random>
#include <thread>

#include "benchforge/util.hpp"

namespace benchforge {

namespace {

std::string uuid_like(std::uint64_t seed, std::uint64_t salt, std::uint64_t index) {
  auto a = hex64(mix64(seed ^ mix64(salt) ^ mix64(index * 2 + 1)));
  auto b = hex64(mix64(seed ^ mix64(salt + 1) ^ mix64(index * 2 + 2)));
  auto s = a + b;
  return s.substr(0, 8) + "-" + s.substr(8, 4) + "-" + s.substr(12, 4) + "-" + s.substr(16, 4) + "-" + s.substr(20, 12);
}

std::int64_t to_i64(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw Error("bad " + std::string(what) + " '" + std::string(s) + "'");
  return v;
}

std::optional<std::int64_t> opt_i64(std::string_view s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  return to_i64(s, what);
}

std::string opt_text(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string{}; }

std::vector<std::vector<std::string>> csv_rows(std::string_view csv, std::string_view header, std::size_t width) {
  std::vector<std::vector<std::string>> rows;
  bool seen_header = false;
  for (auto& raw : split(csv, '\n')) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) throw Error("unexpected CSV header '" + line + "'");
      seen_header = true;
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != width) throw Error("CSV row has " + std::to_string(fields.size()) + " fields: " + line);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

const std::string* CampaignSet::campaign_of(std::string_view ad) const {
  auto it = ad_campaign.find(std::string(ad));
  return it == ad_campaign.end() ? nullptr : &campaigns[it->second];
}

std::string_view event_type_name(EventType t) noexcept {
  switch (t) {
    case EventType::view: return "view";
    case EventType::click: return "click";
    case EventType::purchase: return "purchase";
  }
  return "view";
}

std::optional<EventType> event_type_from_name(std::string_view s) noexcept {
  for (auto t : {EventType::view, EventType::click, EventType::purchase})
    if (event_type_name(t) == s) return t;
  return std::nullopt;
}

void KvStore::set(std::string key, std::string value) {
  std::lock_guard lock(mu_);
  kv_[std::move(key)] = std::move(value);
}

std::optional<std::string> KvStore::get(std::string_view key) const {
  std::lock_guard lock(mu_);
  auto it = kv_.find(key);
  if (it == kv_.end()) return std::nullopt;
  return it->second;
}

std::size_t KvStore::key_count() const {
  std::lock_guard lock(mu_);
  return kv_.size();
}

void KvStore::write_window(const WindowRow& row) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = windows_.try_emplace({row.campaign, row.window_start}, row);
  if (inserted) return;
  auto& cur = it->second;
  cur.count += row.count;
  auto keep_max = [](std::optional<std::int64_t>& a, const std::optional<std::int64_t>& b) {
    if (b && (!a || *b > *a)) a = b;
  };
  keep_max(cur.last_emit_ms, row.last_emit_ms);
  keep_max(cur.write_ms, row.write_ms);
}

std::vector<WindowRow> KvStore::window_rows() const {
  std::lock_guard lock(mu_);
  std::vector<WindowRow> rows;
  rows.reserve(windows_.size());
  for (const auto& [_, row] : windows_) rows.push_back(row);
  return rows;
}

CampaignSet generate_campaigns(std::uint32_t num_campaigns, std::uint32_t ads_per_campaign, std::uint64_t seed,
                               KvStore* store) {
  if (num_campaigns < 1 || ads_per_campaign < 1) throw Error("campaign and ad counts must be >= 1");
  CampaignSet set;
  set.ads_per_campaign = ads_per_campaign;
  for (std::uint32_t c = 0; c < num_campaigns; ++c) set.campaigns.push_back(uuid_like(seed, 0xca, c));
  for (std::uint32_t c = 0; c < num_campaigns; ++c) {
    for (std::uint32_t a = 0; a < ads_per_campaign; ++a) {
      auto ad = uuid_like(seed, 0xad, std::uint64_t{c} * ads_per_campaign + a);
      set.ad_campaign.emplace(ad, c);
      set.ads.push_back(std::move(ad));
    }
  }
  if (store) {
    for (const auto& [ad, c] : set.ad_campaign) store->set("ad:" + ad, set.campaigns[c]);
    for (const auto& c : set.campaigns) store->set("campaign:" + c, std::to_string(ads_per_campaign));
  }
  return set;
}

EventBus::EventBus(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

bool EventBus::try_push(AdEvent event) {
  {
    std::lock_guard lock(mu_);
    if (closed_ || queue_.size() >= capacity_) return false;
    queue_.push_back(std::move(event));
  }
  cv_.notify_one();
  return true;
}

std::optional<AdEvent> EventBus::pop() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !queue_.empty() || closed_; });
  if (queue_.empty()) return std::nullopt;
  auto e = std::move(queue_.front());
  queue_.pop_front();
  return e;
}

void EventBus::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

GeneratorReport run_event_generator(const CampaignSet& campaigns, std::uint32_t rate, std::uint32_t duration_s,
                                    EventBus& sink, std::uint64_t seed, std::stop_token stop) {
  if (rate < 1 || duration_s < 1) {
    sink.close();
    throw Error("rate and duration must be >= 1");
  }
  if (campaigns.ads.empty()) {
    sink.close();
    throw Error("campaign set has no ads");
  }
  GeneratorReport report;
  report.events.reserve(static_cast<std::size_t>(rate) * duration_s + 16);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_ad(0, campaigns.ads.size() - 1);
  std::uniform_int_distribution<int> pick_type(0, 2);

  const double burst = std::max(1.0, static_cast<double>(rate));
  const auto start = MonoClock::now();
  const auto deadline = start + std::chrono::seconds(duration_s);
  double tokens = 1.0;
  auto last = start;
  while (!stop.stop_requested()) {
    auto now = MonoClock::now();
    if (now >= deadline) break;
    tokens = std::min(burst, tokens + rate * std::chrono::duration<double>(now - last).count());
    last = now;
    while (tokens >= 1.0) {
      tokens -= 1.0;
      AdEvent e;
      e.event_id = report.emitted_count++;
      e.ad_id = campaigns.ads[pick_ad(rng)];
      e.type = static_cast<EventType>(pick_type(rng));
      e.event_time_ms = anchored_ms();
      e.emit_ms = anchored_ms();
      auto copy = e;
      if (sink.try_push(std::move(e)))
        report.events.push_back(std::move(copy));
      else
        ++report.dropped;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  sink.close();
  return report;
}

ProcessingReport process_stream(EventBus& source, KvStore& store, std::int64_t window_ms,
                                std::uint32_t processor_eps) {
  if (window_ms < 100) {
    throw Error("window must be >= 100 ms");
  }
  struct Open {
    std::uint64_t count = 0;
    std::int64_t last_emit_ms = 0;
  };
  ProcessingReport report;
  std::map<std::int64_t, std::map<std::string, Open>> open;  // window_start -> campaign -> aggregate
  std::optional<std::int64_t> max_event_time;
  std::optional<std::int64_t> closed_until;  // windows starting before this were written
  std::optional<MonoClock::time_point> paced_from;

  auto write = [&](std::int64_t start, const std::string& campaign, const Open& agg) {
    store.write_window({campaign, start, agg.count, agg.last_emit_ms, anchored_ms()});
    ++report.rows_written;
  };
  auto close_through = [&](std::int64_t watermark) {
    while (!open.empty() && open.begin()->first + window_ms <= watermark) {
      auto node = open.extract(open.begin());
      for (const auto& [campaign, agg] : node.mapped()) write(node.key(), campaign, agg);
      closed_until = std::max(closed_until.value_or(node.key() + window_ms), node.key() + window_ms);
    }
  };

  while (auto event = source.pop()) {
    if (processor_eps > 0) {
      if (!paced_from) paced_from = MonoClock::now();
      std::this_thread::sleep_until(*paced_from + std::chrono::duration_cast<MonoClock::duration>(
                                                     std::chrono::duration<double>(double(report.processed) / processor_eps)));
    }
    ++report.processed;
    auto campaign = store.get("ad:" + event->ad_id);
    if (!campaign) {
      ++report.unknown;
      continue;
    }
    auto start = event->event_time_ms - ((event->event_time_ms % window_ms) + window_ms) % window_ms;
    if (closed_until && start < *closed_until) {
      ++report.late;
      write(start, *campaign, {1, event->emit_ms});
      continue;
    }
    auto& agg = open[start][*campaign];
    ++agg.count;
    agg.last_emit_ms = std::max(agg.last_emit_ms, event->emit_ms);
    max_event_time = std::max(max_event_time.value_or(event->event_time_ms), event->event_time_ms);
    close_through(*max_event_time - window_ms);
  }
  for (const auto& [start, per_campaign] : open)
    for (const auto& [campaign, agg] : per_campaign) write(start, campaign, agg);
  return report;
}

LatencyReport compute_latencies(const std::vector<WindowRow>& rows) {
  LatencyReport report;
  for (const auto& row : rows) {
    if (!row.last_emit_ms || !row.write_ms) {
      ++report.skipped;
      continue;
    }
    report.records.push_back(
        {row.campaign, row.window_start, *row.last_emit_ms, *row.write_ms, *row.write_ms - *row.last_emit_ms});
  }
  return report;
}

LatencyReport compute_latencies(const KvStore& store) { return compute_latencies(store.window_rows()); }

std::string store_dump_csv(const std::vector<WindowRow>& rows) {
  std::string out(kStoreDumpHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.campaign + ',' + std::to_string(r.window_start) + ',' + std::to_string(r.count) + ',' +
           opt_text(r.last_emit_ms) + ',' + opt_text(r.write_ms) + '\n';
  }
  return out;
}

std::vector<WindowRow> parse_store_dump(std::string_view csv) {
  std::vector<WindowRow> rows;
  for (auto& f : csv_rows(csv, kStoreDumpHeader, 5)) {
    WindowRow r;
    r.campaign = f[0];
    r.window_start = to_i64(f[1], "window_start");
    r.count = static_cast<std::uint64_t>(to_i64(f[2], "count"));
    r.last_emit_ms = opt_i64(f[3], "last_emit_ms");
    r.write_ms = opt_i64(f[4], "write_ms");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string event_log_csv(const std::vector<AdEvent>& events) {
  std::string out(kEventLogHeader);
  out += '\n';
  for (const auto& e : events) {
    out += std::to_string(e.event_id) + ',' + e.ad_id + ',' + std::to_string(e.event_time_ms) + ',' +
           std::to_string(e.emit_ms) + ',' + std::string(event_type_name(e.type)) + '\n';
  }
  return out;
}

std::vector<AdEvent> parse_event_log(std::string_view csv) {
  std::vector<AdEvent> events;
  for (auto& f : csv_rows(csv, kEventLogHeader, 5)) {
    AdEvent e;
    e.event_id = static_cast<std::uint64_t>(to_i64(f[0], "event_id"));
    e.ad_id = f[1];
    e.event_time_ms = to_i64(f[2], "event_time_ms");
    e.emit_ms = to_i64(f[3], "emit_ms");
    auto type = event_type_from_name(f[4]);
    if (!type) throw Error("bad event type '" + f[4] + "'");
    e.type = *type;
    events.push_back(std::move(e));
  }
  return events;
}

nlohmann::json StreamResult::to_json() const {
  return {{"kind", "stream"},     {"engine", engine},   {"rate", rate},
          {"duration_s", duration_s}, {"window_ms", window_ms}, {"emitted", emitted},
          {"dropped", dropped},   {"processed", processed}, {"unknown", unknown},
          {"rows", rows},         {"skipped_rows", skipped_rows}, {"latencies_ms", latencies_ms},
          {"artifacts", artifacts}};
}

StreamResult StreamResult::from_json(const nlohmann::json& j) {
  StreamResult r;
  r.engine = j.value("engine", "builtin");
  r.rate = j.at("rate").get<std::uint32_t>();
  r.duration_s = j.value("duration_s", std::uint32_t{0});
  r.window_ms = j.value("window_ms", std::int64_t{0});
  r.emitted = j.value("emitted", std::uint64_t{0});
  r.dropped = j.value("dropped", std::uint64_t{0});
  r.processed = j.value("processed", std::uint64_t{0});
  r.unknown = j.value("unknown", std::uint64_t{0});
  r.rows = j.value("rows", std::uint64_t{0});
  r.skipped_rows = j.value("skipped_rows", std::size_t{0});
  r.latencies_ms = j.at("latencies_ms").get<std::vector<std::int64_t>>();
  r.artifacts = j.value("artifacts", std::vector<std::string>{});
  return r;
}

StreamResult run_stream_experiment(const StreamParams& params, std::stop_token stop) {
  if (params.window_ms < 100) throw Error("window must be >= 100 ms");
  KvStore store;
  auto campaigns = generate_campaigns(params.num_campaigns, params.ads_per_campaign, params.seed, &store);
  EventBus bus(params.queue_capacity);
  ProcessingReport processing;
  std::jthread processor([&] { processing = process_stream(bus, store, params.window_ms, params.processor_eps); });
  auto generated = run_event_generator(campaigns, params.rate, params.duration_s, bus, params.seed, stop);
  processor.join();

  auto rows = store.window_rows();
  auto latencies = compute_latencies(rows);
  StreamResult result;
  result.engine = params.engine_label;
  result.rate = params.rate;
  result.duration_s = params.duration_s;
  result.window_ms = params.window_ms;
  result.emitted = generated.emitted_count;
  result.dropped = generated.dropped;
  result.processed = processing.processed;
  result.unknown = processing.unknown;
  result.rows = rows.size();
  result.skipped_rows = latencies.skipped;
  for (const auto& l : latencies.records) result.latencies_ms.push_back(l.latency_ms);
  if (!params.out_dir.empty()) {
    auto store_path = params.out_dir / "store.csv";
    auto events_path = params.out_dir / "events.csv";
    write_file(store_path, store_dump_csv(rows));
    write_file(events_path, event_log_csv(generated.events));
    result.artifacts = {store_path.string(), events_path.string()};
  }
  return result;
}

}  // namespace benchforge
