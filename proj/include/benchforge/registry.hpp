#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "benchforge/attributes.hpp"
#include "benchforge/error.hpp"

namespace benchforge {

enum class Phase { setup, datagen, run, teardown };
enum class DepScope { same_machine, any_machine, all_machines };

/// Declared type of a recipe parameter. `bytes` accepts integers or
/// suffixed strings ("16MB") and is rendered as a byte count.
enum class ParamType { string, integer, decimal, boolean, bytes };

std::string_view phase_name(Phase p) noexcept;
std::optional<Phase> phase_from_name(std::string_view s) noexcept;
std::string_view scope_name(DepScope s) noexcept;
std::optional<DepScope> scope_from_name(std::string_view s) noexcept;
std::string_view param_type_name(ParamType t) noexcept;
std::optional<ParamType> param_type_from_name(std::string_view s) noexcept;

struct ParamDecl {
  std::string key;
  ParamType type = ParamType::string;
  std::optional<Scalar> default_value;
  std::optional<double> min;
  std::optional<double> max;
  std::string description;
};

/// Checks `value` against the declared type and bounds. Returns an error
/// message, or nullopt when the value is acceptable.
std::optional<std::string> check_param_value(const ParamDecl& decl, const Scalar& value);

/// Text a value takes inside a script (bytes are rendered as a plain count).
std::string render_param_value(const ParamDecl& decl, const Scalar& value);

struct DependencyRule {
  std::string target;  // recipe id
  DepScope scope = DepScope::any_machine;

  friend bool operator==(const DependencyRule&, const DependencyRule&) = default;
};

struct Recipe {
  std::string id;  // "cookbook::name"
  std::vector<ParamDecl> params;
  std::vector<DependencyRule> deps;
  std::string script;
  Phase phase = Phase::run;
  std::optional<std::chrono::milliseconds> timeout;

  const ParamDecl* find_param(std::string_view key) const;
  std::string_view cookbook() const;
  std::string_view name() const;
};

struct CookbookInfo {
  std::string name;
  std::string version;
  std::string locator;
};

class DependencyCycleError : public ValidationError {
 public:
  explicit DependencyCycleError(std::vector<std::string> cycle);
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

/// Immutable-after-load catalogue of recipes.
class RecipeRegistry {
 public:
  /// Throws ValidationError on duplicate recipe ids or cookbook names.
  void add_cookbook(CookbookInfo info, std::vector<Recipe> recipes);

  /// Verifies dependency targets exist and the dependency graph is acyclic.
  void check() const;

  const Recipe* find(std::string_view id) const;
  const std::map<std::string, Recipe, std::less<>>& recipes() const noexcept { return recipes_; }
  const std::vector<CookbookInfo>& cookbooks() const noexcept { return cookbooks_; }
  bool has_cookbook(std::string_view name) const;
  bool empty() const noexcept { return recipes_.empty(); }

  friend bool operator==(const RecipeRegistry& a, const RecipeRegistry& b);

 private:
  std::map<std::string, Recipe, std::less<>> recipes_;
  std::vector<CookbookInfo> cookbooks_;
};

/// Loads one cookbook directory (`metadata.yaml` + `recipes/<name>.sh.tmpl`).
void load_cookbook(RecipeRegistry& registry, const std::filesystem::path& dir,
                   std::string locator = {});

/// Loads every cookbook directory under `root` in name order and checks the result.
RecipeRegistry load_registry(const std::filesystem::path& root);

/// Well-formed "cookbook::recipe" reference.
bool is_recipe_ref(std::string_view ref);

/// Runtime-injected placeholders: `machine.*`, `run.*`, `bf.*`.
bool is_runtime_var(std::string_view name);

using RuntimeVars = std::map<std::string, std::string, std::less<>>;

struct ExecutableScript {
  std::string recipe;
  std::string text;
  std::optional<std::chrono::milliseconds> timeout;
};

/// Placeholder names appearing in a template, in order of appearance.
std::vector<std::string> placeholders(std::string_view script);

/// Replaces every `{{key.path}}` from runtime vars, then attrs, then declared
/// defaults. Throws ValidationError naming the key on an unresolved
/// placeholder or a constraint violation.
ExecutableScript substitute_params(const Recipe& recipe, const AttributeTree& attrs,
                                   const RuntimeVars& runtime);

}  // namespace benchforge
