#include <gtest/gtest.h>

#include "benchforge/run_record.hpp"
#include "support.hpp"

using namespace benchforge;

namespace {

RunRecord sample_record() {
  RunRecord r;
  r.run_id = "exp-20260101T000000-abcd";
  r.definition_name = "exp";
  r.definition_hash = "0123456789abcdef";
  r.phase = RunPhase::failed;
  r.message = "one task failed";
  r.provenance = {{"host", "h"}, {"definition", "name: exp\n"}};
  r.overrides.set("teragen.records", std::int64_t{5});
  r.parameters["g"].set("teragen.records", std::int64_t{5});
  r.parameters["g"].set("terasort.memory_limit", std::string("16MB"));
  r.parameters["g"].set("x.ratio", 0.5);
  r.parameters["g"].set("x.flag", true);
  TaskRecord a;
  a.id = "c.a@g-0";
  a.machine = "g-0";
  a.recipe = "c::a";
  a.state = TaskState::succeeded;
  a.started_us = 10;
  a.finished_us = 20;
  a.started_ms = 1000;
  a.finished_ms = 1001;
  a.log_ref = "logs/c.a@g-0.log";
  a.log = "hello\n";
  TaskRecord b = a;
  b.id = "c.b@g-0";
  b.recipe = "c::b";
  b.state = TaskState::failed;
  b.exit_code = 3;
  b.error = "exit code 3";
  b.log_ref = "logs/c.b@g-0.log";
  b.log = "bye\n";
  r.tasks = {a, b};
  r.edges = {{"c.a@g-0", "c.b@g-0"}};
  r.measurements.push_back({"c.a@g-0", "batch", {{"kind", "batch"}, {"engine", "builtin"}}});
  MetricSeries s;
  s.machine = "g-0";
  s.samples.push_back({1000, 12.5, 0.3, 100, 200, 1, 2, 3, 4, std::nullopt});
  s.samples.push_back({2000, 50, 0.4, 110, 190, 0, 0, 5, 6, std::nullopt});
  r.metrics["g-0"] = s;
  r.reports = {"reports/g-0/cpu.csv"};
  r.started_ms = 999;
  r.finished_ms = 3000;
  return r;
}

/// run.json only references metric files, so samples survive a directory
/// round trip but not a bare JSON one.
void expect_same(const RunRecord& a, const RunRecord& b, bool with_metrics) {
  EXPECT_EQ(a.parameters, b.parameters);
  EXPECT_EQ(a.overrides, b.overrides);
  if (!with_metrics) {
    auto ja = to_json(a), jb = to_json(b);
    ja.erase("metrics");
    jb.erase("metrics");
    EXPECT_EQ(ja, jb);
    return;
  }
  EXPECT_EQ(to_json(a), to_json(b));
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  EXPECT_EQ(a.metrics.at("g-0").samples, b.metrics.at("g-0").samples);
}

}  // namespace

TEST(RunRecordJson, RoundTrips) {
  auto r = sample_record();
  auto back = run_record_from_json(to_json(r));
  expect_same(r, back, false);
  EXPECT_EQ(back.tasks[1].state, TaskState::failed);
  EXPECT_EQ(back.phase, RunPhase::failed);
  EXPECT_FALSE(back.all_succeeded());
  EXPECT_NE(back.find_task("c.a@g-0"), nullptr);
}

TEST(RunRecordFiles, SaveAndLoad) {
  bftest::TempDir tmp;
  auto r = sample_record();
  save_run_record(r, tmp.path());
  EXPECT_TRUE(std::filesystem::exists(tmp / "run.json"));
  EXPECT_EQ(read_file(tmp / "logs" / "c.b@g-0.log"), "bye\n");
  EXPECT_TRUE(std::filesystem::exists(tmp / "metrics" / "g-0.csv"));
  auto back = load_run_record(tmp.path());
  expect_same(r, back, true);
  EXPECT_THROW(load_run_record(tmp / "missing"), Error);
}

TEST(ExtractMeasurements, OnlyWellFormedMarkers) {
  auto ms = extract_measurements("t", "noise\nBF_RESULT {\"kind\":\"batch\",\"x\":1}\nBF_RESULT {broken\n"
                                      "BF_RESULT {\"nokind\":1}\n  BF_RESULT {\"kind\":\"stream\"}\n");
  ASSERT_EQ(ms.size(), 1u);
  EXPECT_EQ(ms[0].kind, "batch");
  EXPECT_EQ(ms[0].task, "t");
  EXPECT_EQ(ms[0].data["x"], 1);
}

TEST(RunPhaseNames, RoundTrip) {
  for (auto p : {RunPhase::allocating, RunPhase::executing, RunPhase::reporting, RunPhase::done, RunPhase::failed,
                 RunPhase::aborted})
    EXPECT_EQ(run_phase_from_name(run_phase_name(p)), p);
  EXPECT_TRUE(is_terminal(RunPhase::done));
  EXPECT_FALSE(is_terminal(RunPhase::executing));
}
