#include <gtest/gtest.h>

#include "benchforge/batch.hpp"
#include "benchforge/percentile.hpp"
#include "benchforge/report.hpp"
#include "benchforge/run_record.hpp"
#include "benchforge/stream.hpp"
#include "support.hpp"

using namespace benchforge;

namespace {

RunRecord batch_run(std::string engine, std::uint64_t bytes, std::int64_t ms) {
  BatchResult b;
  b.engine = std::move(engine);
  b.input_bytes = bytes;
  b.records = bytes / 100;
  b.execution_time_ms = ms;
  b.sorted = true;
  RunRecord r;
  r.run_id = b.engine + "-" + std::to_string(bytes);
  r.measurements.push_back({"benchmarks.terasort@s-0", "batch", b.to_json()});
  return r;
}

RunRecord stream_run(std::string engine, std::uint32_t rate, std::vector<std::int64_t> latencies) {
  StreamResult s;
  s.engine = std::move(engine);
  s.rate = rate;
  s.duration_s = 10;
  s.window_ms = 1000;
  s.latencies_ms = std::move(latencies);
  RunRecord r;
  r.run_id = s.engine + "-" + std::to_string(rate);
  r.measurements.push_back({"benchmarks.stream@b-0", "stream", s.to_json()});
  return r;
}

constexpr std::uint64_t GB = 1'000'000'000ULL;

}  // namespace

TEST(BatchComparison, ThreeInputLevelsTwoEngines) {
  std::vector<RunRecord> runs;
  for (std::uint64_t gb : {200u, 400u, 600u}) {
    runs.push_back(batch_run("flink", gb * GB, static_cast<std::int64_t>(gb) * 2));
    runs.push_back(batch_run("spark", gb * GB, static_cast<std::int64_t>(gb) * 3));
  }
  auto t = build_batch_comparison(runs);
  EXPECT_EQ(t.dimension, Dimension::input_size);
  ASSERT_EQ(t.series.size(), 2u);
  EXPECT_EQ(t.series["flink"].size(), 3u);
  EXPECT_EQ(t.series["spark"][2], (std::pair<double, double>{600.0 * GB, 1800.0}));
  EXPECT_EQ(t.point_count(), 6u);
  EXPECT_TRUE(t.warnings.empty());

  auto ratios = comparison_ratios(t);
  ASSERT_EQ(ratios.size(), 3u);
  for (const auto& r : ratios) {
    EXPECT_EQ(r.engine, "spark");
    EXPECT_EQ(r.baseline, "flink");
    EXPECT_DOUBLE_EQ(r.ratio, 1.5);
  }
}

TEST(BatchComparison, SingleRunAndAveraging) {
  std::vector<RunRecord> one{batch_run("builtin", 100000000, 350)};
  auto t = build_batch_comparison(one);
  EXPECT_EQ(t.series.size(), 1u);
  EXPECT_EQ(t.point_count(), 1u);
  EXPECT_TRUE(comparison_ratios(t).empty());

  std::vector<RunRecord> twice{batch_run("builtin", 100, 10), batch_run("builtin", 100, 20)};
  auto avg = build_batch_comparison(twice);
  EXPECT_EQ(avg.series["builtin"][0].second, 15.0);
  EXPECT_EQ(avg.warnings.size(), 1u);
}

TEST(BatchComparison, GridMismatchIsReportedAndPartial) {
  std::vector<RunRecord> runs{batch_run("a", 100, 1), batch_run("a", 200, 2), batch_run("b", 100, 3)};
  auto t = build_batch_comparison(runs);
  EXPECT_EQ(t.series["a"].size(), 1u);
  EXPECT_EQ(t.series["b"].size(), 1u);
  ASSERT_FALSE(t.warnings.empty());
  EXPECT_NE(t.warnings[0].find("x grid mismatch"), std::string::npos);
}

TEST(StreamComparison, RateSweepTenPoints) {
  std::vector<RunRecord> runs;
  bftest::Rng rng(61);
  std::vector<std::vector<std::int64_t>> lat;
  for (std::uint32_t rate = 1000; rate <= 10000; rate += 1000) {
    std::vector<std::int64_t> l(static_cast<std::size_t>(rng.between(1, 200)));
    for (auto& v : l) v = rng.between(0, 5000);
    lat.push_back(l);
    runs.push_back(stream_run("builtin", rate, l));
  }
  for (double p : {0.0, 50.0, 99.0}) {
    auto t = build_stream_comparison(runs, p);
    EXPECT_EQ(t.dimension, Dimension::event_rate);
    ASSERT_EQ(t.series["builtin"].size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
      std::vector<double> d(lat[i].begin(), lat[i].end());
      EXPECT_EQ(t.series["builtin"][i].first, 1000.0 * static_cast<double>(i + 1));
      EXPECT_EQ(t.series["builtin"][i].second, percentile(d, p));
      if (p == 0) EXPECT_EQ(t.series["builtin"][i].second, static_cast<double>(*std::min_element(lat[i].begin(), lat[i].end())));
    }
  }
}

TEST(StreamComparison, EmptyLatencyListIsOmitted) {
  std::vector<RunRecord> runs{stream_run("x", 1000, {5, 6}), stream_run("x", 2000, {})};
  auto t = build_stream_comparison(runs, 99);
  EXPECT_EQ(t.series["x"].size(), 1u);
  EXPECT_EQ(t.warnings.size(), 1u);
}

TEST(WorkloadKind, MixtureIsRejected) {
  std::vector<RunRecord> mixed{batch_run("a", 1, 1), stream_run("b", 1000, {1})};
  try {
    common_workload_kind(mixed);
    FAIL();
  } catch (const ReportError& e) {
    EXPECT_NE(std::string(e.what()).find("incompatible"), std::string::npos);
  }
  std::vector<RunRecord> batch{batch_run("a", 1, 1)};
  EXPECT_EQ(common_workload_kind(batch), WorkloadKind::batch);
  std::vector<RunRecord> none{RunRecord{}};
  EXPECT_THROW(common_workload_kind(none), ReportError);
}

namespace {

ComparisonTable two_series() {
  ComparisonTable t;
  t.x_unit = "bytes";
  t.y_unit = "ms";
  t.series["a"] = {{1, 2.5}, {2, 1.0 / 3.0}, {3e12, 7}};
  t.series["b"] = {{1, 3}, {2, 0.1}, {3e12, 1e-9}};
  return t;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST(Render, CsvRowsAndPolylines) {
  bftest::TempDir tmp;
  auto files = render(two_series(), tmp.path());
  EXPECT_EQ(files.size(), 3u);
  auto csv = read_file(tmp / "comparison.csv");
  std::size_t data = 0;
  for (const auto& line : split(csv, '\n'))
    if (!line.empty() && line[0] != '#' && line != "engine,x,y") ++data;
  EXPECT_EQ(data, 6u);
  auto svg = read_file(tmp / "comparison.svg");
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_NE(svg.find("bytes"), std::string::npos);
  EXPECT_NE(svg.find("ms"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(tmp / "ratios.csv"));
}

TEST(Render, SinglePointGetsAMarker) {
  bftest::TempDir tmp;
  ComparisonTable t;
  t.series["only"] = {{5, 5}};
  render(t, tmp.path());
  auto svg = read_file(tmp / "comparison.svg");
  EXPECT_EQ(count(svg, "<circle"), 1u);
  EXPECT_FALSE(std::filesystem::exists(tmp / "ratios.csv"));
}

TEST(Render, EmptyTableAndUnwritableDirectory) {
  bftest::TempDir tmp;
  EXPECT_THROW(render(ComparisonTable{}, tmp.path()), Error);
  write_file(tmp / "f", "x");
  EXPECT_THROW(render(two_series(), tmp / "f" / "sub"), IoError);
}

TEST(ComparisonCsv, RoundTripsExactly) {
  auto t = two_series();
  EXPECT_EQ(parse_comparison_csv(comparison_csv(t)), t);
  bftest::Rng rng(67);
  for (int trial = 0; trial < 200; ++trial) {
    ComparisonTable r;
    r.dimension = rng.chance(0.5) ? Dimension::input_size : Dimension::event_rate;
    r.x_unit = "u";
    r.y_unit = "v";
    auto xs = rng.between(1, 6);
    for (int s = 0; s < rng.between(1, 3); ++s)
      for (int i = 0; i < xs; ++i)
        r.series["e" + std::to_string(s)].emplace_back(static_cast<double>(i) * rng.real(1, 1e9), rng.real(0, 1e6));
    EXPECT_EQ(parse_comparison_csv(comparison_csv(r)), r);
  }
  EXPECT_THROW(parse_comparison_csv("nonsense\n"), ReportError);
}
