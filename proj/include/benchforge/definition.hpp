#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "benchforge/attributes.hpp"
#include "benchforge/registry.hpp"

namespace benchforge {

enum class Backend { local, remote_shell };

std::string_view backend_name(Backend b) noexcept;

struct ProviderSpec {
  Backend backend = Backend::local;
  std::string instance_profile = "local";
  /// Currency per hour. Recorded for provenance only.
  std::optional<double> spot_price_limit;

  friend bool operator==(const ProviderSpec&, const ProviderSpec&) = default;
};

struct CookbookRef {
  std::string name;
  std::string locator;
  std::string version;

  friend bool operator==(const CookbookRef&, const CookbookRef&) = default;
};

struct Group {
  std::string name;
  std::int64_t size = 1;
  std::vector<std::string> recipes;
  AttributeTree attributes;

  friend bool operator==(const Group&, const Group&) = default;
};

/// A parsed experiment definition.
///
/// Document grammar (YAML, reserved top-level keys only):
///
///     name: hadoop
///     provider: {backend: local | remote-shell, instance_profile: m3.xlarge,
///                spot_price_limit: 0.25}
///     cookbooks:
///       hadoop: {locator: cookbooks/hadoop, version: "1.0"}   # or just a locator string
///     groups:
///       namenodes: {size: 1, recipes: [hadoop::nn], attrs: {...}}
///     attrs:
///       teragen.records: 1000000        # dotted ...
///       spark: {executor: {memory: 100GB}}   # ... or nested
struct ExperimentDefinition {
  std::string name;
  ProviderSpec provider;
  std::vector<CookbookRef> cookbooks;
  std::vector<Group> groups;
  AttributeTree global_attributes;

  std::int64_t machine_count() const noexcept;
  const Group* find_group(std::string_view name) const;

  friend bool operator==(const ExperimentDefinition&, const ExperimentDefinition&) = default;
};

/// Throws ParseError (with line/column where known) on syntax errors, unknown
/// top-level keys, duplicate group names, empty group lists and sizes < 1.
ExperimentDefinition parse_definition(std::string_view text);

/// Canonical YAML form; parse_definition(serialize_definition(d)) == d.
std::string serialize_definition(const ExperimentDefinition& def);

/// Stable content hash of the canonical form (16 hex digits).
std::string definition_hash(const ExperimentDefinition& def);

/// Registry for a definition. With `roots`, loads every cookbook under them
/// (a root may itself be a cookbook). Otherwise each declared cookbook is
/// looked up as `<locator>` or `cookbooks/<locator>` relative to `base_dir`
/// and its ancestors. Throws IoError for a cookbook that cannot be found.
RecipeRegistry resolve_registry(const ExperimentDefinition& def, const std::filesystem::path& base_dir,
                                const std::vector<std::filesystem::path>& roots = {});

enum class Severity { error, warning };

std::string_view severity_name(Severity s) noexcept;

struct Finding {
  Severity severity = Severity::error;
  std::string path;
  std::string message;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;

  std::size_t error_count() const noexcept;
  bool runnable() const noexcept { return error_count() == 0; }
};

/// Findings are data: this never throws for a malformed definition.
/// `user` holds operator overrides and is checked like the attribute blocks.
ValidationReport validate(const ExperimentDefinition& def, const RecipeRegistry& registry,
                          const AttributeTree& user = {});

/// Effective attributes for one group: global < group < user.
AttributeTree effective_attributes(const ExperimentDefinition& def, const Group& group,
                                   const AttributeTree& user = {});

struct FormField {
  std::string key;
  std::string recipe;  // first recipe declaring the key
  ParamType type = ParamType::string;
  std::optional<Scalar> default_value;
  std::optional<Scalar> effective_value;  // global < user, before group overrides
  std::map<std::string, Scalar> group_values;  // groups whose merged value differs
  std::string description;
};

struct ParameterForm {
  std::vector<FormField> fields;
};

/// One field per declared parameter of every recipe the definition uses,
/// in order of first use.
ParameterForm render_parameter_form(const ExperimentDefinition& def, const RecipeRegistry& registry,
                                    const AttributeTree& user = {});

}  // namespace benchforge
