#include "benchforge/definition.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "benchforge/util.hpp"

namespace benchforge {

std::string_view backend_name(Backend b) noexcept {
  return b == Backend::local ? "local" : "remote-shell";
}

std::int64_t ExperimentDefinition::machine_count() const noexcept {
  std::int64_t n = 0;
  for (const auto& g : groups) n += g.size;
  return n;
}

const Group* ExperimentDefinition::find_group(std::string_view name) const {
  auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.name == name; });
  return it == groups.end() ? nullptr : &*it;
}

namespace {

ParseError error_at(const YAML::Node& node, const std::string& msg) {
  auto mark = node.Mark();
  if (mark.is_null()) return ParseError(msg);
  return ParseError(msg, static_cast<std::size_t>(mark.line) + 1,
                    static_cast<std::size_t>(mark.column) + 1);
}

bool is_identifier(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

std::string require_scalar(const YAML::Node& node, const std::string& what) {
  if (!node.IsScalar()) throw error_at(node, what + " must be a scalar");
  return node.Scalar();
}

Scalar to_scalar(const YAML::Node& node) {
  if (node.Tag() == "!") return node.Scalar();
  return infer_scalar(node.Scalar());
}

void flatten_attrs(const YAML::Node& node, const std::string& prefix, AttributeTree& out) {
  if (!node.IsMap()) throw error_at(node, "attribute block must be a mapping");
  std::set<std::string> seen;
  for (const auto& kv : node) {
    if (!kv.first.IsScalar()) throw error_at(kv.first, "attribute key must be a scalar");
    std::string key;
    try {
      key = normalize_key(kv.first.Scalar());
    } catch (const ValidationError& e) {
      throw error_at(kv.first, e.what());
    }
    if (!seen.insert(key).second) throw error_at(kv.first, "duplicate attribute key '" + key + "'");
    auto full = prefix.empty() ? key : prefix + "." + key;
    const auto& value = kv.second;
    if (value.IsMap()) {
      flatten_attrs(value, full, out);
    } else if (value.IsScalar()) {
      try {
        out.set(full, to_scalar(value));
      } catch (const ValidationError& e) {
        throw error_at(kv.first, e.what());
      }
    } else {
      throw error_at(value.IsNull() ? kv.first : value,
                     "attribute '" + full + "' must be a scalar or a mapping");
    }
  }
}

ProviderSpec parse_provider(const YAML::Node& node) {
  ProviderSpec p;
  if (!node.IsMap()) throw error_at(node, "provider must be a mapping");
  for (const auto& kv : node) {
    auto key = require_scalar(kv.first, "provider key");
    if (key == "backend") {
      auto v = require_scalar(kv.second, "provider.backend");
      if (v == "local") p.backend = Backend::local;
      else if (v == "remote-shell") p.backend = Backend::remote_shell;
      else throw error_at(kv.second, "unknown backend '" + v + "' (expected local or remote-shell)");
    } else if (key == "instance_profile") {
      p.instance_profile = require_scalar(kv.second, "provider.instance_profile");
    } else if (key == "spot_price_limit") {
      auto v = infer_scalar(require_scalar(kv.second, "provider.spot_price_limit"));
      double price = 0;
      if (auto* i = std::get_if<std::int64_t>(&v)) price = static_cast<double>(*i);
      else if (auto* d = std::get_if<double>(&v)) price = *d;
      else throw error_at(kv.second, "spot_price_limit must be a number");
      if (!(price > 0)) throw error_at(kv.second, "spot_price_limit must be > 0");
      p.spot_price_limit = price;
    } else {
      throw error_at(kv.first, "unknown provider key '" + key + "'");
    }
  }
  return p;
}

std::vector<CookbookRef> parse_cookbooks(const YAML::Node& node) {
  std::vector<CookbookRef> out;
  if (node.IsNull()) return out;
  if (!node.IsMap()) throw error_at(node, "cookbooks must be a mapping");
  for (const auto& kv : node) {
    CookbookRef ref;
    ref.name = require_scalar(kv.first, "cookbook name");
    if (!is_identifier(ref.name)) throw error_at(kv.first, "invalid cookbook name '" + ref.name + "'");
    if (std::any_of(out.begin(), out.end(), [&](const auto& c) { return c.name == ref.name; }))
      throw error_at(kv.first, "duplicate cookbook '" + ref.name + "'");
    const auto& body = kv.second;
    if (body.IsScalar()) {
      ref.locator = body.Scalar();
    } else if (body.IsMap()) {
      for (const auto& f : body) {
        auto key = require_scalar(f.first, "cookbook key");
        if (key == "locator") ref.locator = require_scalar(f.second, "locator");
        else if (key == "version") ref.version = require_scalar(f.second, "version");
        else throw error_at(f.first, "unknown cookbook key '" + key + "'");
      }
    } else if (!body.IsNull()) {
      throw error_at(body, "cookbook '" + ref.name + "' must be a locator or a mapping");
    }
    if (ref.locator.empty()) ref.locator = ref.name;
    out.push_back(std::move(ref));
  }
  return out;
}

Group parse_group(const std::string& name, const YAML::Node& node) {
  Group g;
  g.name = name;
  if (!node.IsMap()) throw error_at(node, "group '" + name + "' must be a mapping");
  bool have_size = false;
  for (const auto& kv : node) {
    auto key = require_scalar(kv.first, "group key");
    if (key == "size") {
      auto v = infer_scalar(require_scalar(kv.second, "size"));
      auto* n = std::get_if<std::int64_t>(&v);
      if (!n) throw error_at(kv.second, "size must be an integer");
      if (*n < 1) throw error_at(kv.second, "size must be ≥ 1");
      g.size = *n;
      have_size = true;
    } else if (key == "recipes") {
      if (kv.second.IsNull()) continue;
      if (!kv.second.IsSequence()) throw error_at(kv.second, "recipes must be a list");
      for (const auto& r : kv.second) {
        auto ref = require_scalar(r, "recipe reference");
        if (!is_recipe_ref(ref))
          throw error_at(r, "malformed recipe reference '" + ref + "' (expected cookbook::recipe)");
        g.recipes.push_back(ref);
      }
    } else if (key == "attrs") {
      if (!kv.second.IsNull()) flatten_attrs(kv.second, "", g.attributes);
    } else {
      throw error_at(kv.first, "unknown key '" + key + "' in group '" + name + "'");
    }
  }
  if (!have_size) g.size = 1;
  return g;
}

}  // namespace

ExperimentDefinition parse_definition(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, static_cast<std::size_t>(e.mark.line) + 1,
                     static_cast<std::size_t>(e.mark.column) + 1);
  } catch (const YAML::Exception& e) {
    throw ParseError(e.msg);
  } catch (const std::exception& e) {
    throw ParseError(e.what());
  }
  try {
    if (!root.IsMap()) throw ParseError("definition must be a mapping of top-level keys");
    ExperimentDefinition def;
    bool have_groups = false;
    std::set<std::string> seen;
    for (const auto& kv : root) {
      auto key = require_scalar(kv.first, "top-level key");
      if (!seen.insert(key).second) throw error_at(kv.first, "duplicate top-level key '" + key + "'");
      const auto& v = kv.second;
      if (key == "name") {
        def.name = require_scalar(v, "name");
      } else if (key == "provider") {
        if (!v.IsNull()) def.provider = parse_provider(v);
      } else if (key == "cookbooks") {
        def.cookbooks = parse_cookbooks(v);
      } else if (key == "groups") {
        have_groups = true;
        if (v.IsNull()) continue;
        if (!v.IsMap()) throw error_at(v, "groups must be a mapping of group name to group");
        for (const auto& g : v) {
          auto gname = require_scalar(g.first, "group name");
          if (!is_identifier(gname)) throw error_at(g.first, "invalid group name '" + gname + "'");
          if (def.find_group(gname)) throw error_at(g.first, "duplicate group name '" + gname + "'");
          def.groups.push_back(parse_group(gname, g.second));
        }
      } else if (key == "attrs") {
        if (!v.IsNull()) flatten_attrs(v, "", def.global_attributes);
      } else {
        throw error_at(kv.first, "unknown top-level key '" + key + "'");
      }
    }
    if (def.name.empty()) throw ParseError("name must be nonempty");
    if (!have_groups || def.groups.empty()) throw ParseError("no groups declared");
    return def;
  } catch (const ParseError&) {
    throw;
  } catch (const YAML::Exception& e) {
    throw ParseError(e.msg, e.mark.is_null() ? 0 : static_cast<std::size_t>(e.mark.line) + 1,
                     e.mark.is_null() ? 0 : static_cast<std::size_t>(e.mark.column) + 1);
  }
}

namespace {

void emit_scalar(YAML::Emitter& out, const Scalar& v) {
  if (const auto* s = std::get_if<std::string>(&v)) {
    out << YAML::DoubleQuoted << *s;
  } else {
    out << scalar_text(v);
  }
}

void emit_attrs(YAML::Emitter& out, const AttributeTree& attrs) {
  out << YAML::BeginMap;
  for (const auto& [k, v] : attrs.leaves()) {
    out << YAML::Key << k << YAML::Value;
    emit_scalar(out, v);
  }
  out << YAML::EndMap;
}

}  // namespace

std::string serialize_definition(const ExperimentDefinition& def) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << YAML::DoubleQuoted << def.name;
  out << YAML::Key << "provider" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "backend" << YAML::Value << std::string(backend_name(def.provider.backend));
  out << YAML::Key << "instance_profile" << YAML::Value << YAML::DoubleQuoted
      << def.provider.instance_profile;
  if (def.provider.spot_price_limit)
    out << YAML::Key << "spot_price_limit" << YAML::Value
        << scalar_text(Scalar(*def.provider.spot_price_limit));
  out << YAML::EndMap;
  out << YAML::Key << "cookbooks" << YAML::Value << YAML::BeginMap;
  for (const auto& c : def.cookbooks) {
    out << YAML::Key << c.name << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "locator" << YAML::Value << YAML::DoubleQuoted << c.locator;
    out << YAML::Key << "version" << YAML::Value << YAML::DoubleQuoted << c.version;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  out << YAML::Key << "groups" << YAML::Value << YAML::BeginMap;
  for (const auto& g : def.groups) {
    out << YAML::Key << g.name << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "size" << YAML::Value << g.size;
    out << YAML::Key << "recipes" << YAML::Value << YAML::BeginSeq;
    for (const auto& r : g.recipes) out << r;
    out << YAML::EndSeq;
    out << YAML::Key << "attrs" << YAML::Value;
    emit_attrs(out, g.attributes);
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  out << YAML::Key << "attrs" << YAML::Value;
  emit_attrs(out, def.global_attributes);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string definition_hash(const ExperimentDefinition& def) {
  return hex64(fnv1a64(serialize_definition(def)));
}

std::string_view severity_name(Severity s) noexcept { return s == Severity::error ? "ERROR" : "WARNING"; }

std::size_t ValidationReport::error_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [](const auto& f) {
    return f.severity == Severity::error;
  }));
}

namespace {

/// Declared parameters of every resolvable recipe used anywhere, first declaration wins.
std::vector<std::pair<const ParamDecl*, const Recipe*>> used_params(const ExperimentDefinition& def,
                                                                     const RecipeRegistry& registry) {
  std::vector<std::pair<const ParamDecl*, const Recipe*>> out;
  std::set<std::string_view> seen_recipe, seen_key;
  for (const auto& g : def.groups) {
    for (const auto& ref : g.recipes) {
      const auto* r = registry.find(ref);
      if (!r || !seen_recipe.insert(r->id).second) continue;
      for (const auto& p : r->params) {
        if (seen_key.insert(p.key).second) out.emplace_back(&p, r);
      }
    }
  }
  return out;
}

void check_attrs(const AttributeTree& attrs, const std::string& path_prefix,
                 const std::vector<std::pair<const ParamDecl*, const Recipe*>>& params,
                 std::vector<Finding>& findings) {
  for (const auto& [key, value] : attrs.leaves()) {
    auto it = std::find_if(params.begin(), params.end(),
                           [&](const auto& p) { return p.first->key == key; });
    auto path = path_prefix + key;
    if (it == params.end()) {
      findings.push_back({Severity::warning, path, "unknown attribute '" + key + "'"});
      continue;
    }
    if (auto err = check_param_value(*it->first, value))
      findings.push_back({Severity::error, path, *err});
  }
}

}  // namespace

ValidationReport validate(const ExperimentDefinition& def, const RecipeRegistry& registry,
                          const AttributeTree& user) {
  ValidationReport report;
  auto& f = report.findings;
  if (def.name.empty()) f.push_back({Severity::error, "name", "name must be nonempty"});
  if (def.provider.spot_price_limit && !(*def.provider.spot_price_limit > 0))
    f.push_back({Severity::error, "provider.spot_price_limit", "spot_price_limit must be > 0"});
  if (def.groups.empty()) f.push_back({Severity::error, "groups", "no groups declared"});
  std::set<std::string_view> group_names;
  for (const auto& g : def.groups) {
    auto gpath = "groups." + g.name;
    if (!group_names.insert(g.name).second)
      f.push_back({Severity::error, gpath, "duplicate group name '" + g.name + "'"});
    if (g.size < 1) f.push_back({Severity::error, gpath + ".size", "size must be ≥ 1"});
    for (std::size_t i = 0; i < g.recipes.size(); ++i) {
      const auto& ref = g.recipes[i];
      auto rpath = gpath + ".recipes[" + std::to_string(i) + "]";
      if (!is_recipe_ref(ref)) {
        f.push_back({Severity::error, rpath, "malformed recipe reference '" + ref + "'"});
        continue;
      }
      auto cookbook = ref.substr(0, ref.find("::"));
      bool declared = std::any_of(def.cookbooks.begin(), def.cookbooks.end(),
                                  [&](const auto& c) { return c.name == cookbook; });
      if (!declared)
        f.push_back({Severity::error, rpath, "cookbook '" + cookbook + "' of '" + ref + "' is not declared"});
      if (!registry.find(ref)) f.push_back({Severity::error, rpath, "unknown recipe '" + ref + "'"});
    }
  }
  auto params = used_params(def, registry);
  check_attrs(def.global_attributes, "attrs.", params, f);
  for (const auto& g : def.groups) check_attrs(g.attributes, "groups." + g.name + ".attrs.", params, f);
  check_attrs(user, "overrides.", params, f);
  for (const auto& g : def.groups) {
    try {
      (void)merge_attributes(def.global_attributes, g.attributes, user);
    } catch (const AttributeConflictError& e) {
      for (const auto& c : e.conflicts())
        f.push_back({Severity::error, "groups." + g.name + ".attrs." + c.key,
                     "type conflict: " + std::string(kind_name(c.lower)) + " vs " +
                         std::string(kind_name(c.higher))});
    }
  }
  return report;
}

AttributeTree effective_attributes(const ExperimentDefinition& def, const Group& group,
                                   const AttributeTree& user) {
  return merge_attributes(def.global_attributes, group.attributes, user);
}

ParameterForm render_parameter_form(const ExperimentDefinition& def, const RecipeRegistry& registry,
                                    const AttributeTree& user) {
  ParameterForm form;
  auto base = merge_over(def.global_attributes, user);
  for (const auto& [decl, recipe] : used_params(def, registry)) {
    FormField field;
    field.key = decl->key;
    field.recipe = recipe->id;
    field.type = decl->type;
    field.default_value = decl->default_value;
    field.description = decl->description;
    if (const auto* v = base.find(decl->key)) field.effective_value = *v;
    else field.effective_value = decl->default_value;
    for (const auto& g : def.groups) {
      auto merged = effective_attributes(def, g, user);
      const auto* v = merged.find(decl->key);
      if (v && (!field.effective_value || *v != *field.effective_value)) field.group_values[g.name] = *v;
    }
    form.fields.push_back(std::move(field));
  }
  return form;
}

RecipeRegistry resolve_registry(const ExperimentDefinition& def, const std::filesystem::path& base_dir,
                                const std::vector<std::filesystem::path>& roots) {
  namespace fs = std::filesystem;
  RecipeRegistry registry;
  auto is_cookbook = [](const fs::path& p) { return fs::exists(p / "metadata.yaml"); };
  if (!roots.empty()) {
    for (const auto& root : roots) {
      if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
      if (is_cookbook(root)) {
        load_cookbook(registry, root);
        continue;
      }
      std::vector<fs::path> dirs;
      for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && is_cookbook(e.path())) dirs.push_back(e.path());
      std::sort(dirs.begin(), dirs.end());
      for (const auto& d : dirs) load_cookbook(registry, d);
    }
    registry.check();
    return registry;
  }
  const auto base = fs::absolute(base_dir.empty() ? fs::current_path() : base_dir);
  for (const auto& ref : def.cookbooks) {
    std::optional<fs::path> found;
    fs::path locator(ref.locator.empty() ? ref.name : ref.locator);
    if (locator.is_absolute()) {
      if (is_cookbook(locator)) found = locator;
    } else {
      for (auto dir = base; !found; dir = dir.parent_path()) {
        for (const auto& candidate : {dir / locator, dir / "cookbooks" / locator}) {
          if (is_cookbook(candidate)) {
            found = candidate;
            break;
          }
        }
        if (dir == dir.parent_path()) break;
      }
    }
    if (!found) throw IoError("cannot locate cookbook '" + ref.name + "' (" + locator.string() + ")");
    if (!registry.has_cookbook(ref.name)) load_cookbook(registry, *found, ref.locator);
  }
  registry.check();
  return registry;
}

}  // namespace benchforge
