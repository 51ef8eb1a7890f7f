#include "benchforge/plan.hpp"

#include <algorithm>

namespace benchforge {

namespace {

std::string dot_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

Plan make_plan(const ExperimentDefinition& def, const RecipeRegistry& registry) {
  Plan plan;
  plan.dag = build_dag(def, registry, planned_machines(def));
  plan.dag.definition_hash = definition_hash(def);
  plan.stages = topological_plan(plan.dag);
  for (auto& s : plan.stages) std::sort(s.begin(), s.end());
  return plan;
}

nlohmann::json plan_json(const Plan& plan) {
  std::vector<std::size_t> stage_of(plan.dag.nodes.size(), 0);
  auto stages = nlohmann::json::array();
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    auto ids = nlohmann::json::array();
    for (auto i : plan.stages[k]) {
      stage_of[i] = k;
      ids.push_back(plan.dag.nodes[i].id);
    }
    stages.push_back(ids);
  }
  auto nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < plan.dag.nodes.size(); ++i) {
    const auto& n = plan.dag.nodes[i];
    nodes.push_back({{"id", n.id}, {"machine", n.machine}, {"recipe", n.recipe}, {"stage", stage_of[i]}});
  }
  auto edges = nlohmann::json::array();
  for (auto [a, b] : plan.dag.edges) edges.push_back({{"from", plan.dag.nodes[a].id}, {"to", plan.dag.nodes[b].id}});
  return {{"nodes", nodes}, {"edges", edges}, {"stages", stages}};
}

std::string plan_text(const Plan& plan) {
  if (plan.dag.nodes.empty()) return "empty plan: no tasks\n";
  std::string out;
  for (std::size_t k = 0; k < plan.stages.size(); ++k) {
    out += "stage " + std::to_string(k) + ":";
    for (auto i : plan.stages[k]) out += " " + plan.dag.nodes[i].id;
    out += "\n";
  }
  return out;
}

std::string plan_dot(const Plan& plan) {
  std::string out = "digraph plan {\n  rankdir=TB;\n";
  for (const auto& n : plan.dag.nodes)
    out += "  " + dot_quote(n.id) + " [label=" + dot_quote(n.recipe) + "];\n";
  for (auto [a, b] : plan.dag.edges)
    out += "  " + dot_quote(plan.dag.nodes[a].id) + " -> " + dot_quote(plan.dag.nodes[b].id) + ";\n";
  return out + "}\n";
}

}  // namespace benchforge
