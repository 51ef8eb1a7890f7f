#include <gtest/gtest.h>

#include <map>
#include <set>

#include "benchforge/plan.hpp"
#include "scheduler_support.hpp"

using namespace benchforge;

namespace {

RecipeRegistry bundled() { return load_registry(bftest::source_dir() / "cookbooks"); }

std::vector<std::vector<std::string>> stage_ids(const Plan& plan) {
  std::vector<std::vector<std::string>> out;
  for (const auto& stage : plan.stages) {
    out.emplace_back();
    for (auto i : stage) out.back().push_back(plan.dag.nodes[i].id);
  }
  return out;
}

}  // namespace

TEST(Plan, HadoopTwoStages) {
  auto def = parse_definition(
      "name: hadoop\ncookbooks: {hadoop: cookbooks/hadoop}\n"
      "groups:\n  namenodes: {size: 1, recipes: [hadoop::nn]}\n  datanodes: {size: 2, recipes: [hadoop::dn]}\n");
  auto plan = make_plan(def, bundled());
  EXPECT_EQ(stage_ids(plan), (std::vector<std::vector<std::string>>{
                                 {"hadoop.nn@namenodes-0"},
                                 {"hadoop.dn@datanodes-0", "hadoop.dn@datanodes-1"}}));
  EXPECT_EQ(plan.dag.edges.size(), 2u);
}

TEST(Plan, FullHadoopWithResourceManager) {
  auto plan = make_plan(parse_definition(bftest::kHadoopFull), bundled());
  ASSERT_EQ(plan.stages.size(), 2u);
  EXPECT_EQ(plan.stages[0].size(), 2u);
  EXPECT_EQ(plan.stages[1].size(), 4u);
  EXPECT_EQ(plan.dag.machines.size(), 3u);
}

TEST(Plan, SameMachineDependencyNeedsCoLocation) {
  auto def = parse_definition(
      "name: t\ncookbooks: {benchmarks: cookbooks/benchmarks}\n"
      "groups: {a: {size: 1, recipes: [benchmarks::teragen]}, b: {size: 1, recipes: [benchmarks::terasort]}}\n");
  EXPECT_THROW(make_plan(def, bundled()), ValidationError);
}

TEST(Plan, TextJsonAndDotAgree) {
  auto plan = make_plan(parse_definition(bftest::kHadoopFull), bundled());
  auto text = plan_text(plan);
  EXPECT_EQ(text.rfind("stage 0: ", 0), 0u);
  auto j = plan_json(plan);
  EXPECT_EQ(j["nodes"].size(), plan.dag.nodes.size());
  EXPECT_EQ(j["edges"].size(), plan.dag.edges.size());
  auto dot = plan_dot(plan);
  std::size_t arrows = 0, labels = 0;
  for (std::size_t p = 0; (p = dot.find(" -> ", p)) != std::string::npos; ++p) ++arrows;
  for (std::size_t p = 0; (p = dot.find("[label=", p)) != std::string::npos; ++p) ++labels;
  EXPECT_EQ(arrows, plan.dag.edges.size());
  EXPECT_EQ(labels, plan.dag.nodes.size());
}

namespace {

/// Synthetic cookbook `c`: a (setup), b needs a on any machine, r (run) needs
/// a on all machines, g (datagen) needs b on the same machine.
RecipeRegistry synthetic_registry() {
  RecipeRegistry reg;
  Recipe a, b, r, g;
  a.id = "c::a";
  a.phase = Phase::setup;
  b.id = "c::b";
  b.phase = Phase::setup;
  b.deps = {{"c::a", DepScope::any_machine}};
  r.id = "c::r";
  r.phase = Phase::run;
  r.deps = {{"c::a", DepScope::all_machines}};
  g.id = "c::g";
  g.phase = Phase::datagen;
  g.deps = {{"c::b", DepScope::same_machine}};
  reg.add_cookbook({"c", "1", ""}, {a, b, r, g});
  reg.check();
  return reg;
}

struct Expansion {
  bool ok = true;
  std::vector<std::string> nodes;
  std::set<std::pair<std::string, std::string>> edges;
};

/// Independent expansion straight from the rules.
Expansion expand_oracle(const ExperimentDefinition& def) {
  Expansion out;
  struct Inst {
    std::string recipe, machine, id;
  };
  std::vector<Inst> insts;
  for (const auto& g : def.groups)
    for (std::int64_t i = 0; i < g.size; ++i) {
      auto machine = g.name + "-" + std::to_string(i);
      for (const auto& r : g.recipes) {
        auto id = r.substr(3);
        insts.push_back({id, machine, "c." + id + "@" + machine});
      }
    }
  auto of = [&](const std::string& recipe) {
    std::vector<const Inst*> v;
    for (const auto& x : insts)
      if (x.recipe == recipe) v.push_back(&x);
    return v;
  };
  for (const auto& x : insts) {
    out.nodes.push_back(x.id);
    if (x.recipe == "b") {
      auto as = of("a");
      if (as.empty()) return {false, {}, {}};
      out.edges.emplace(as.front()->id, x.id);
    } else if (x.recipe == "r") {
      auto as = of("a");
      if (as.empty()) return {false, {}, {}};
      for (auto* p : as) out.edges.emplace(p->id, x.id);
    } else if (x.recipe == "g") {
      const Inst* same = nullptr;
      for (auto* p : of("b"))
        if (p->machine == x.machine) same = p;
      if (!same) return {false, {}, {}};
      out.edges.emplace(same->id, x.id);
    }
  }
  for (auto* g : of("g"))
    for (auto* r : of("r")) out.edges.emplace(g->id, r->id);
  return out;
}

}  // namespace

TEST(BuildDagProperty, MatchesBruteForceExpansion) {
  auto reg = synthetic_registry();
  bftest::Rng rng(29);
  const std::vector<std::string> all = {"c::a", "c::b", "c::r", "c::g"};
  int buildable = 0;
  for (int trial = 0; trial < 400; ++trial) {
    ExperimentDefinition def;
    def.name = "t";
    def.cookbooks.push_back({"c", "c", "1"});
    for (int gi = 0; gi < 3; ++gi) {
      Group g;
      g.name = "g" + std::to_string(gi);
      g.size = rng.between(1, 3);
      auto order = all;
      std::shuffle(order.begin(), order.end(), rng.engine());
      for (const auto& r : order)
        if (rng.chance(0.6)) g.recipes.push_back(r);
      def.groups.push_back(std::move(g));
    }
    auto expected = expand_oracle(def);
    if (!expected.ok) {
      EXPECT_THROW(build_dag(def, reg, planned_machines(def)), ValidationError);
      continue;
    }
    ++buildable;
    auto dag = build_dag(def, reg, planned_machines(def));
    std::vector<std::string> nodes;
    for (const auto& n : dag.nodes) nodes.push_back(n.id);
    EXPECT_EQ(nodes, expected.nodes);
    std::set<std::pair<std::string, std::string>> edges;
    for (auto [a, b] : dag.edges) edges.emplace(dag.nodes[a].id, dag.nodes[b].id);
    EXPECT_EQ(edges, expected.edges);

    auto stages = topological_plan(dag);
    std::vector<std::size_t> stage_of(dag.nodes.size());
    std::size_t placed = 0;
    for (std::size_t s = 0; s < stages.size(); ++s)
      for (auto i : stages[s]) stage_of[i] = s, ++placed;
    EXPECT_EQ(placed, dag.nodes.size());
    for (auto [a, b] : dag.edges) EXPECT_LT(stage_of[a], stage_of[b]);
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
      std::size_t longest = 0;
      for (auto [a, b] : dag.edges)
        if (b == i) longest = std::max(longest, stage_of[a] + 1);
      EXPECT_EQ(stage_of[i], longest);
    }
  }
  EXPECT_GT(buildable, 50);
}

TEST(TopologicalPlan, RejectsCycle) {
  TaskDag dag;
  dag.nodes.resize(2);
  dag.nodes[0].id = "x";
  dag.nodes[1].id = "y";
  dag.edges = {{0, 1}, {1, 0}};
  EXPECT_THROW(topological_plan(dag), ValidationError);
}

TEST(TopologicalPlan, EmptyDagHasNoStages) { EXPECT_TRUE(topological_plan(TaskDag{}).empty()); }

TEST(Execute, RespectsEdgesAndBound) {
  bftest::Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    auto dag = bftest::random_task_dag(rng, 30);
    for (std::size_t p : {1u, 2u, 8u}) {
      bftest::FakeExecutor exec;
      ExecuteOptions opt;
      opt.parallelism = p;
      auto rec = execute(dag, exec, opt);
      EXPECT_EQ(rec.phase, RunPhase::done);
      auto audit = bftest::audit_schedule(dag, rec);
      EXPECT_EQ(audit.order_violations, 0u) << audit.first_problem;
      EXPECT_LE(audit.max_concurrency, p);
      EXPECT_LE(static_cast<std::size_t>(exec.peak()), p);
      EXPECT_EQ(static_cast<std::size_t>(exec.calls()), dag.nodes.size());
    }
  }
}

TEST(Execute, FailureSkipsOnlyDependents) {
  // 0 -> 1 -> 2, 3 independent, 0 fails
  TaskDag dag;
  dag.machines.machines.push_back({"m-0", "m", 0, "fake", "local", ""});
  for (int i = 0; i < 4; ++i) {
    TaskNode n;
    n.recipe = "r::t" + std::to_string(i);
    n.machine = "m-0";
    n.id = task_id(n.recipe, n.machine);
    n.script = ExecutableScript{n.recipe, i == 0 ? "fail" : "sleep 10", std::nullopt};
    dag.nodes.push_back(n);
  }
  dag.edges = {{0, 1}, {1, 2}};
  bftest::FakeExecutor exec;
  auto rec = execute(dag, exec, {});
  EXPECT_EQ(rec.phase, RunPhase::failed);
  EXPECT_EQ(rec.tasks[0].state, TaskState::failed);
  EXPECT_EQ(rec.tasks[1].state, TaskState::skipped);
  EXPECT_EQ(rec.tasks[2].state, TaskState::skipped);
  EXPECT_EQ(rec.tasks[3].state, TaskState::succeeded);
  EXPECT_EQ(exec.calls(), 2);
}

TEST(ExecuteProperty, FailuresNeverReleaseDependents) {
  bftest::Rng rng(37);
  for (int trial = 0; trial < 80; ++trial) {
    auto dag = bftest::random_task_dag(rng, 25, 0.15);
    bftest::FakeExecutor exec;
    ExecuteOptions opt;
    opt.parallelism = static_cast<std::size_t>(rng.between(1, 4));
    auto rec = execute(dag, exec, opt);
    auto audit = bftest::audit_schedule(dag, rec);
    EXPECT_EQ(audit.started_after_failed_dep, 0u) << audit.first_problem;
    EXPECT_EQ(audit.order_violations, 0u) << audit.first_problem;
    for (const auto& t : rec.tasks) EXPECT_TRUE(is_terminal(t.state));
  }
}

TEST(Execute, DiamondBranchesOverlap) {
  TaskDag dag;
  for (int m = 0; m < 2; ++m) dag.machines.machines.push_back({"m-" + std::to_string(m), "m", std::size_t(m), "fake", "local", ""});
  const char* names[] = {"top", "left", "right", "bottom"};
  for (int i = 0; i < 4; ++i) {
    TaskNode n;
    n.recipe = std::string("d::") + names[i];
    n.machine = i == 2 ? "m-1" : "m-0";
    n.id = task_id(n.recipe, n.machine);
    n.script = ExecutableScript{n.recipe, "sleep 100000", std::nullopt};
    dag.nodes.push_back(n);
  }
  dag.edges = {{0, 1}, {0, 2}, {1, 3}, {2, 3}};
  bftest::FakeExecutor exec;
  ExecuteOptions opt;
  opt.parallelism = 2;
  auto rec = execute(dag, exec, opt);
  ASSERT_EQ(rec.phase, RunPhase::done);
  const auto &l = rec.tasks[1], &r = rec.tasks[2];
  EXPECT_LT(std::max(l.started_us, r.started_us), std::min(l.finished_us, r.finished_us));
  EXPECT_GE(rec.tasks[3].started_us, std::max(l.finished_us, r.finished_us));
  EXPECT_EQ(exec.peak(), 2);
}

TEST(Execute, StopAbortsRunningAndSkipsTheRest) {
  TaskDag dag;
  dag.machines.machines.push_back({"m-0", "m", 0, "fake", "local", ""});
  for (int i = 0; i < 3; ++i) {
    TaskNode n;
    n.recipe = "r::t" + std::to_string(i);
    n.machine = "m-0";
    n.id = task_id(n.recipe, n.machine);
    n.script = ExecutableScript{n.recipe, i == 0 ? "block" : "sleep 1", std::nullopt};
    dag.nodes.push_back(n);
  }
  dag.edges = {{0, 1}};
  std::stop_source source;
  ExecuteOptions opt;
  opt.parallelism = 1;
  opt.stop = source.get_token();
  std::vector<DagSnapshot> snaps;
  std::mutex snaps_mutex;
  opt.on_transition = [&](const DagSnapshot& s) {
    std::lock_guard lock(snaps_mutex);
    snaps.push_back(s);
  };
  bftest::FakeExecutor exec;
  std::jthread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    source.request_stop();
  });
  auto rec = execute(dag, exec, opt);
  EXPECT_EQ(rec.phase, RunPhase::aborted);
  EXPECT_EQ(rec.tasks[0].state, TaskState::failed);
  EXPECT_EQ(rec.tasks[1].state, TaskState::skipped);
  for (const auto& t : rec.tasks) EXPECT_TRUE(is_terminal(t.state));
  ASSERT_FALSE(snaps.empty());
  EXPECT_EQ(snaps.back().completed, snaps.back().total);
  for (std::size_t i = 1; i < snaps.size(); ++i) EXPECT_GE(snaps[i].completed, snaps[i - 1].completed);
}

TEST(Execute, RealScriptsOnLocalExecutor) {
  auto def = parse_definition(bftest::kHadoopFull);
  auto reg = bundled();
  bftest::TempDir tmp;
  LocalExecutor exec(tmp / "sandbox", false);
  auto requests = group_requests(def);
  auto machines = exec.allocate(def.provider, requests);
  auto dag = build_dag(def, reg, machines);
  dag.run_id = "unit";
  bind_scripts(dag, def, reg, {}, {{"run.dir", tmp.path().string()}, {"bf.exe", bftest::bf_exe().string()}}, &exec);
  auto rec = execute(dag, exec, {});
  EXPECT_EQ(rec.phase, RunPhase::done) << rec.message;
  auto audit = bftest::audit_schedule(dag, rec);
  EXPECT_EQ(audit.order_violations, 0u);
  EXPECT_LE(audit.max_concurrency, machines.size());
  for (const auto& t : rec.tasks) EXPECT_FALSE(t.log.empty()) << t.id;
  exec.deallocate(machines);
}
