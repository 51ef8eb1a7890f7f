#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "benchforge/dag.hpp"

namespace benchforge {

struct Plan {
  TaskDag dag;
  std::vector<std::vector<std::size_t>> stages;  // node indices, ascending within a stage
};

/// DAG over the machines the definition would be allocated, with stages.
Plan make_plan(const ExperimentDefinition& def, const RecipeRegistry& registry);

/// {"nodes":[{id,machine,recipe,stage}], "edges":[{from,to}], "stages":[[ids]]}
nlohmann::json plan_json(const Plan& plan);

/// One `stage <k>: <id> <id> ...` line per stage, or a single note for an
/// empty plan.
std::string plan_text(const Plan& plan);

/// Graphviz digraph with one node statement per task and one edge statement
/// per dependency.
std::string plan_dot(const Plan& plan);

}  // namespace benchforge
