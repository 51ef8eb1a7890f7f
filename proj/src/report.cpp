#include "benchforge/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "benchforge/batch.hpp"
#include "benchforge/percentile.hpp"
#include "benchforge/stream.hpp"
#include "benchforge/svg.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

namespace {

using Points = std::vector<std::pair<double, double>>;

double to_double(std::string_view s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ReportError("bad number '" + std::string(s) + "'");
  return v;
}

/// Integral values print without exponent; others use the shortest
/// round-trip form.
std::string number_text(double v) {
  if (std::trunc(v) == v && std::fabs(v) < 1e15) return std::to_string(static_cast<std::int64_t>(v));
  return format_double(v);
}

std::string run_label(const RunRecord& r) { return r.run_id.empty() ? r.definition_name : r.run_id; }

/// Averages duplicate x per engine, then restricts every series to the x
/// values all series share.
ComparisonTable finish_table(ComparisonTable table, std::map<std::string, std::map<double, std::vector<double>>> raw) {
  for (auto& [engine, by_x] : raw) {
    Points pts;
    for (auto& [x, ys] : by_x) {
      double sum = 0;
      for (double y : ys) sum += y;
      if (ys.size() > 1)
        table.warnings.push_back(engine + " at x=" + format_double(x) + ": averaged " + std::to_string(ys.size()) +
                                 " runs");
      pts.emplace_back(x, sum / static_cast<double>(ys.size()));
    }
    table.series[engine] = std::move(pts);
  }
  if (table.series.size() < 2) return table;
  std::set<double> shared;
  for (const auto& [x, _] : table.series.begin()->second) shared.insert(x);
  for (const auto& [_, pts] : table.series) {
    std::set<double> xs;
    for (const auto& [x, y] : pts) xs.insert(x);
    std::set<double> keep;
    std::set_intersection(shared.begin(), shared.end(), xs.begin(), xs.end(), std::inserter(keep, keep.end()));
    shared = std::move(keep);
  }
  for (auto& [engine, pts] : table.series) {
    Points kept;
    for (const auto& pt : pts) {
      if (shared.count(pt.first))
        kept.push_back(pt);
      else
        table.warnings.push_back("x grid mismatch: dropped " + engine + " at x=" + format_double(pt.first));
    }
    pts = std::move(kept);
  }
  std::erase_if(table.series, [](const auto& kv) { return kv.second.empty(); });
  return table;
}

bool has_kind(const RunRecord& r, std::string_view kind) {
  return std::any_of(r.measurements.begin(), r.measurements.end(), [&](const auto& m) { return m.kind == kind; });
}

}  // namespace

std::string_view dimension_name(Dimension d) noexcept {
  return d == Dimension::input_size ? "input_size" : "event_rate";
}

std::optional<Dimension> dimension_from_name(std::string_view s) noexcept {
  if (s == "input_size") return Dimension::input_size;
  if (s == "event_rate") return Dimension::event_rate;
  return std::nullopt;
}

std::size_t ComparisonTable::point_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, pts] : series) n += pts.size();
  return n;
}

ComparisonTable build_batch_comparison(std::span<const RunRecord> runs) {
  ComparisonTable table;
  table.dimension = Dimension::input_size;
  table.x_unit = "bytes";
  table.y_unit = "ms";
  std::map<std::string, std::map<double, std::vector<double>>> raw;
  for (const auto& run : runs) {
    bool found = false;
    for (const auto& m : run.measurements) {
      if (m.kind != "batch") continue;
      auto b = BatchResult::from_json(m.data);
      raw[b.engine][static_cast<double>(b.input_bytes)].push_back(static_cast<double>(b.execution_time_ms));
      found = true;
    }
    if (!found) throw ReportError("run " + run_label(run) + " carries no batch result");
  }
  return finish_table(std::move(table), std::move(raw));
}

ComparisonTable build_stream_comparison(std::span<const RunRecord> runs, double p) {
  ComparisonTable table;
  table.dimension = Dimension::event_rate;
  table.x_unit = "events/s";
  table.y_unit = "ms";
  std::map<std::string, std::map<double, std::vector<double>>> raw;
  for (const auto& run : runs) {
    bool found = false;
    for (const auto& m : run.measurements) {
      if (m.kind != "stream") continue;
      found = true;
      auto s = StreamResult::from_json(m.data);
      if (s.latencies_ms.empty()) {
        table.warnings.push_back("run " + run_label(run) + " (" + m.task + ") has no latencies; point omitted");
        continue;
      }
      std::vector<double> values(s.latencies_ms.begin(), s.latencies_ms.end());
      raw[s.engine][static_cast<double>(s.rate)].push_back(percentile(values, p));
    }
    if (!found) throw ReportError("run " + run_label(run) + " carries no stream result");
  }
  return finish_table(std::move(table), std::move(raw));
}

WorkloadKind common_workload_kind(std::span<const RunRecord> runs) {
  if (runs.empty()) throw ReportError("no runs given");
  std::optional<WorkloadKind> kind;
  std::string first;
  for (const auto& run : runs) {
    bool batch = has_kind(run, "batch");
    bool stream = has_kind(run, "stream");
    if (batch && stream) throw ReportError("run " + run_label(run) + " mixes batch and stream results");
    if (!batch && !stream) throw ReportError("run " + run_label(run) + " carries no workload result");
    auto k = batch ? WorkloadKind::batch : WorkloadKind::stream;
    if (kind && *kind != k)
      throw ReportError("incompatible runs: " + first + " is " + (*kind == WorkloadKind::batch ? "batch" : "stream") +
                        " but " + run_label(run) + " is " + (batch ? "batch" : "stream"));
    if (!kind) first = run_label(run);
    kind = k;
  }
  return *kind;
}

std::vector<RatioRow> comparison_ratios(const ComparisonTable& table) {
  std::vector<RatioRow> rows;
  if (table.series.size() < 2) return rows;
  const auto& [baseline, base_pts] = *table.series.begin();
  std::map<double, double> base(base_pts.begin(), base_pts.end());
  for (const auto& [engine, pts] : table.series) {
    if (engine == baseline) continue;
    for (const auto& [x, y] : pts) {
      auto it = base.find(x);
      if (it == base.end() || it->second == 0) continue;
      rows.push_back({engine, baseline, x, y / it->second});
    }
  }
  return rows;
}

std::string comparison_csv(const ComparisonTable& table) {
  std::string out = "# units: x=" + table.x_unit + " y=" + table.y_unit + "\n";
  out += "# dimension: " + std::string(dimension_name(table.dimension)) + "\n";
  out += "engine,x,y\n";
  for (const auto& [engine, pts] : table.series)
    for (const auto& [x, y] : pts) out += engine + "," + number_text(x) + "," + number_text(y) + "\n";
  return out;
}

ComparisonTable parse_comparison_csv(std::string_view csv) {
  ComparisonTable table;
  bool header = false;
  for (const auto& raw : split(csv, '\n')) {
    auto line = trim(raw);
    if (line.empty()) continue;
    if (starts_with(line, "# units:")) {
      for (const auto& part : split(trim(line.substr(8)), ' ')) {
        if (starts_with(part, "x=")) table.x_unit = part.substr(2);
        if (starts_with(part, "y=")) table.y_unit = part.substr(2);
      }
      continue;
    }
    if (starts_with(line, "# dimension:")) {
      auto d = dimension_from_name(trim(line.substr(12)));
      if (!d) throw ReportError("unknown dimension in '" + line + "'");
      table.dimension = *d;
      continue;
    }
    if (line[0] == '#') continue;
    if (!header) {
      if (line != "engine,x,y") throw ReportError("expected header engine,x,y, got '" + line + "'");
      header = true;
      continue;
    }
    auto f = split(line, ',');
    if (f.size() != 3) throw ReportError("malformed row '" + line + "'");
    table.series[f[0]].emplace_back(to_double(f[1]), to_double(f[2]));
  }
  if (!header) throw ReportError("missing header engine,x,y");
  return table;
}

std::string comparison_svg(const ComparisonTable& table) {
  ChartSpec chart;
  if (table.dimension == Dimension::input_size) {
    chart.title = "Execution time by input size";
    chart.x_label = "input size (" + table.x_unit + ")";
    chart.y_label = "execution time (" + table.y_unit + ")";
  } else {
    chart.title = "Window latency by event rate";
    chart.x_label = "event rate (" + table.x_unit + ")";
    chart.y_label = "latency (" + table.y_unit + ")";
  }
  for (const auto& [engine, pts] : table.series) chart.series.push_back({engine, pts});
  return render_line_chart(chart);
}

std::string ratios_csv(const std::vector<RatioRow>& rows) {
  std::string out = "engine,baseline,x,ratio\n";
  for (const auto& r : rows)
    out += r.engine + "," + r.baseline + "," + number_text(r.x) + "," + number_text(r.ratio) + "\n";
  return out;
}

std::vector<std::filesystem::path> render(const ComparisonTable& table, const std::filesystem::path& out) {
  if (table.empty()) throw ReportError("comparison table is empty");
  std::vector<std::filesystem::path> written{out / "comparison.csv", out / "comparison.svg"};
  write_file(written[0], comparison_csv(table));
  write_file(written[1], comparison_svg(table));
  if (table.series.size() >= 2) {
    written.push_back(out / "ratios.csv");
    write_file(written[2], ratios_csv(comparison_ratios(table)));
  }
  return written;
}

}  // namespace benchforge
