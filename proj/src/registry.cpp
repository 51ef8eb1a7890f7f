#include "benchforge/registry.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;

std::string_view phase_name(Phase p) noexcept {
  switch (p) {
    case Phase::setup: return "setup";
    case Phase::datagen: return "datagen";
    case Phase::run: return "run";
    case Phase::teardown: return "teardown";
  }
  return "?";
}

std::optional<Phase> phase_from_name(std::string_view s) noexcept {
  for (auto p : {Phase::setup, Phase::datagen, Phase::run, Phase::teardown})
    if (phase_name(p) == s) return p;
  return std::nullopt;
}

std::string_view scope_name(DepScope s) noexcept {
  switch (s) {
    case DepScope::same_machine: return "same-machine";
    case DepScope::any_machine: return "any-machine";
    case DepScope::all_machines: return "all-machines";
  }
  return "?";
}

std::optional<DepScope> scope_from_name(std::string_view s) noexcept {
  for (auto v : {DepScope::same_machine, DepScope::any_machine, DepScope::all_machines})
    if (scope_name(v) == s) return v;
  return std::nullopt;
}

std::string_view param_type_name(ParamType t) noexcept {
  switch (t) {
    case ParamType::string: return "string";
    case ParamType::integer: return "integer";
    case ParamType::decimal: return "decimal";
    case ParamType::boolean: return "boolean";
    case ParamType::bytes: return "bytes";
  }
  return "?";
}

std::optional<ParamType> param_type_from_name(std::string_view s) noexcept {
  for (auto t : {ParamType::string, ParamType::integer, ParamType::decimal, ParamType::boolean,
                 ParamType::bytes})
    if (param_type_name(t) == s) return t;
  return std::nullopt;
}

namespace {

std::optional<double> numeric_value(const ParamDecl& decl, const Scalar& value) {
  switch (decl.type) {
    case ParamType::integer:
    case ParamType::decimal:
      if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
      if (const auto* d = std::get_if<double>(&value)) return *d;
      return std::nullopt;
    case ParamType::bytes:
      if (const auto* i = std::get_if<std::int64_t>(&value)) return static_cast<double>(*i);
      if (const auto* s = std::get_if<std::string>(&value))
        if (auto b = parse_bytes(*s)) return static_cast<double>(*b);
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

}  // namespace

std::optional<std::string> check_param_value(const ParamDecl& decl, const Scalar& value) {
  auto kind = kind_of(value);
  auto mismatch = [&] {
    return "expected " + std::string(param_type_name(decl.type)) + ", got " +
           std::string(kind_name(kind)) + " '" + scalar_text(value) + "'";
  };
  switch (decl.type) {
    case ParamType::string:
      break;
    case ParamType::integer:
      if (kind != ScalarKind::integer) return mismatch();
      break;
    case ParamType::decimal:
      if (kind != ScalarKind::integer && kind != ScalarKind::decimal) return mismatch();
      break;
    case ParamType::boolean:
      if (kind != ScalarKind::boolean) return mismatch();
      break;
    case ParamType::bytes:
      if (kind == ScalarKind::integer) {
        if (std::get<std::int64_t>(value) < 0) return "byte count must be non-negative";
      } else if (kind != ScalarKind::string || !parse_bytes(std::get<std::string>(value))) {
        return mismatch();
      }
      break;
  }
  if (auto n = numeric_value(decl, value)) {
    if (decl.min && *n < *decl.min)
      return "value " + scalar_text(value) + " below minimum " + format_double(*decl.min);
    if (decl.max && *n > *decl.max)
      return "value " + scalar_text(value) + " above maximum " + format_double(*decl.max);
  }
  return std::nullopt;
}

std::string render_param_value(const ParamDecl& decl, const Scalar& value) {
  if (decl.type == ParamType::bytes) {
    if (const auto* s = std::get_if<std::string>(&value))
      if (auto b = parse_bytes(*s)) return std::to_string(*b);
  }
  return scalar_text(value);
}

const ParamDecl* Recipe::find_param(std::string_view key) const {
  auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.key == key; });
  return it == params.end() ? nullptr : &*it;
}

std::string_view Recipe::cookbook() const {
  std::string_view v = id;
  return v.substr(0, v.find("::"));
}

std::string_view Recipe::name() const {
  std::string_view v = id;
  auto pos = v.find("::");
  return pos == std::string_view::npos ? v : v.substr(pos + 2);
}

namespace {

std::string cycle_text(const std::vector<std::string>& cycle) {
  std::string s = "dependency cycle: ";
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    if (i) s += " -> ";
    s += cycle[i];
  }
  return s;
}

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace

DependencyCycleError::DependencyCycleError(std::vector<std::string> cycle)
    : ValidationError(cycle_text(cycle)), cycle_(std::move(cycle)) {}

bool is_recipe_ref(std::string_view ref) {
  auto pos = ref.find("::");
  if (pos == std::string_view::npos) return false;
  return is_identifier(ref.substr(0, pos)) && is_identifier(ref.substr(pos + 2));
}

bool is_runtime_var(std::string_view name) {
  return starts_with(name, "machine.") || starts_with(name, "run.") || starts_with(name, "bf.");
}

void RecipeRegistry::add_cookbook(CookbookInfo info, std::vector<Recipe> recipes) {
  if (has_cookbook(info.name)) throw ValidationError("duplicate cookbook '" + info.name + "'");
  for (const auto& r : recipes) {
    if (recipes_.count(r.id)) throw ValidationError("duplicate recipe id '" + r.id + "'");
  }
  for (auto& r : recipes) {
    auto id = r.id;
    recipes_.emplace(std::move(id), std::move(r));
  }
  cookbooks_.push_back(std::move(info));
}

void RecipeRegistry::check() const {
  for (const auto& [id, r] : recipes_) {
    for (const auto& d : r.deps) {
      if (!recipes_.count(d.target))
        throw ValidationError("recipe '" + id + "' depends on unknown recipe '" + d.target + "'");
    }
  }
  // iterative three-colour DFS; a grey successor closes a cycle
  enum Colour { white, grey, black };
  std::map<std::string_view, Colour> colour;
  for (const auto& [id, r] : recipes_) colour[id] = white;
  for (const auto& [root, unused] : recipes_) {
    if (colour[root] != white) continue;
    std::vector<std::pair<std::string_view, std::size_t>> stack{{root, 0}};
    colour[root] = grey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& deps = recipes_.find(node)->second.deps;
      if (next == deps.size()) {
        colour[node] = black;
        stack.pop_back();
        continue;
      }
      std::string_view target = deps[next++].target;
      if (colour[target] == grey) {
        std::vector<std::string> cycle;
        auto it = std::find_if(stack.begin(), stack.end(),
                               [&](const auto& e) { return e.first == target; });
        for (; it != stack.end(); ++it) cycle.emplace_back(it->first);
        cycle.emplace_back(target);
        throw DependencyCycleError(std::move(cycle));
      }
      if (colour[target] == white) {
        colour[target] = grey;
        stack.emplace_back(target, 0);
      }
    }
  }
}

const Recipe* RecipeRegistry::find(std::string_view id) const {
  auto it = recipes_.find(id);
  return it == recipes_.end() ? nullptr : &it->second;
}

bool RecipeRegistry::has_cookbook(std::string_view name) const {
  return std::any_of(cookbooks_.begin(), cookbooks_.end(),
                     [&](const auto& c) { return c.name == name; });
}

namespace {

bool same_param(const ParamDecl& a, const ParamDecl& b) {
  return a.key == b.key && a.type == b.type && a.default_value == b.default_value &&
         a.min == b.min && a.max == b.max && a.description == b.description;
}

bool same_recipe(const Recipe& a, const Recipe& b) {
  return a.id == b.id && a.deps == b.deps && a.script == b.script && a.phase == b.phase &&
         a.timeout == b.timeout &&
         std::equal(a.params.begin(), a.params.end(), b.params.begin(), b.params.end(), same_param);
}

}  // namespace

bool operator==(const RecipeRegistry& a, const RecipeRegistry& b) {
  if (a.recipes_.size() != b.recipes_.size() || a.cookbooks_.size() != b.cookbooks_.size())
    return false;
  for (std::size_t i = 0; i < a.cookbooks_.size(); ++i) {
    const auto &x = a.cookbooks_[i], &y = b.cookbooks_[i];
    if (x.name != y.name || x.version != y.version || x.locator != y.locator) return false;
  }
  return std::equal(a.recipes_.begin(), a.recipes_.end(), b.recipes_.begin(),
                    [](const auto& x, const auto& y) { return same_recipe(x.second, y.second); });
}

namespace {

Scalar yaml_scalar(const YAML::Node& node) {
  auto text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  return infer_scalar(text);
}

ParseError metadata_error(const fs::path& file, const YAML::Node& node, const std::string& msg) {
  auto mark = node.Mark();
  return ParseError(file.string() + ": " + msg, mark.is_null() ? 0 : mark.line + 1,
                    mark.is_null() ? 0 : mark.column + 1);
}

ParamDecl parse_param(const fs::path& file, const YAML::Node& node) {
  if (!node.IsMap()) throw metadata_error(file, node, "parameter declaration must be a mapping");
  ParamDecl p;
  if (!node["key"] || !node["key"].IsScalar())
    throw metadata_error(file, node, "parameter needs a 'key'");
  try {
    p.key = normalize_key(node["key"].Scalar());
  } catch (const ValidationError& e) {
    throw metadata_error(file, node, e.what());
  }
  if (auto t = node["type"]) {
    auto type = param_type_from_name(t.Scalar());
    if (!type) throw metadata_error(file, t, "unknown parameter type '" + t.Scalar() + "'");
    p.type = *type;
  }
  if (auto d = node["default"]) {
    if (!d.IsScalar()) throw metadata_error(file, d, "default must be a scalar");
    p.default_value = yaml_scalar(d);
  }
  try {
    if (auto m = node["min"]) p.min = m.as<double>();
    if (auto m = node["max"]) p.max = m.as<double>();
  } catch (const YAML::Exception&) {
    throw metadata_error(file, node, "min/max must be numeric");
  }
  if (auto d = node["description"]) p.description = d.Scalar();
  if (p.default_value) {
    if (auto err = check_param_value(p, *p.default_value))
      throw metadata_error(file, node, "default of '" + p.key + "': " + *err);
  }
  return p;
}

}  // namespace

void load_cookbook(RecipeRegistry& registry, const fs::path& dir, std::string locator) {
  auto meta_path = dir / "metadata.yaml";
  YAML::Node meta;
  try {
    meta = YAML::LoadFile(meta_path.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read " + meta_path.string());
  } catch (const YAML::ParserException& e) {
    throw ParseError(meta_path.string() + ": " + e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!meta.IsMap()) throw ParseError(meta_path.string() + ": metadata must be a mapping");

  CookbookInfo info;
  info.name = meta["name"] ? meta["name"].Scalar() : dir.filename().string();
  if (!is_identifier(info.name))
    throw ParseError(meta_path.string() + ": invalid cookbook name '" + info.name + "'");
  info.version = meta["version"] ? meta["version"].Scalar() : "";
  info.locator = locator.empty() ? dir.string() : std::move(locator);

  std::vector<Recipe> recipes;
  std::set<std::string> declared;
  auto recipes_dir = dir / "recipes";
  if (auto rn = meta["recipes"]) {
    if (!rn.IsMap()) throw metadata_error(meta_path, rn, "'recipes' must be a mapping");
    for (const auto& entry : rn) {
      Recipe r;
      auto name = entry.first.Scalar();
      if (!is_identifier(name)) throw metadata_error(meta_path, entry.first, "invalid recipe name");
      if (!declared.insert(name).second)
        throw metadata_error(meta_path, entry.first, "duplicate recipe id '" + info.name + "::" + name + "'");
      r.id = info.name + "::" + name;
      const auto& body = entry.second;
      if (!body.IsNull() && !body.IsMap())
        throw metadata_error(meta_path, body, "recipe '" + name + "' must be a mapping");
      if (body.IsMap()) {
        if (auto ph = body["phase"]) {
          auto phase = phase_from_name(ph.Scalar());
          if (!phase) throw metadata_error(meta_path, ph, "unknown phase '" + ph.Scalar() + "'");
          r.phase = *phase;
        }
        if (auto t = body["timeout_ms"]) {
          try {
            r.timeout = std::chrono::milliseconds(t.as<std::int64_t>());
          } catch (const YAML::Exception&) {
            throw metadata_error(meta_path, t, "timeout_ms must be an integer");
          }
        }
        if (auto ps = body["params"]) {
          if (!ps.IsSequence()) throw metadata_error(meta_path, ps, "'params' must be a list");
          for (const auto& p : ps) {
            auto decl = parse_param(meta_path, p);
            if (r.find_param(decl.key))
              throw metadata_error(meta_path, p, "duplicate parameter '" + decl.key + "'");
            r.params.push_back(std::move(decl));
          }
        }
        if (auto ds = body["deps"]) {
          if (!ds.IsSequence()) throw metadata_error(meta_path, ds, "'deps' must be a list");
          for (const auto& d : ds) {
            DependencyRule rule;
            std::string target = d.IsMap() && d["target"] ? d["target"].Scalar() : d.Scalar();
            if (target.find("::") == std::string::npos) target = info.name + "::" + target;
            if (!is_recipe_ref(target))
              throw metadata_error(meta_path, d, "malformed dependency target '" + target + "'");
            rule.target = target;
            if (d.IsMap() && d["scope"]) {
              auto scope = scope_from_name(d["scope"].Scalar());
              if (!scope)
                throw metadata_error(meta_path, d, "unknown scope '" + d["scope"].Scalar() + "'");
              rule.scope = *scope;
            }
            r.deps.push_back(std::move(rule));
          }
        }
      }
      auto script_path = recipes_dir / (name + ".sh.tmpl");
      if (!fs::exists(script_path))
        throw ParseError(meta_path.string() + ": recipe '" + name + "' has no " +
                         script_path.filename().string());
      r.script = read_file(script_path);
      for (const auto& ph : placeholders(r.script)) {
        if (!is_runtime_var(ph) && !r.find_param(ph))
          throw ParseError(script_path.string() + ": placeholder '{{" + ph +
                           "}}' names no declared parameter");
      }
      recipes.push_back(std::move(r));
    }
  }
  // templates without a metadata entry become parameterless run-phase recipes
  if (fs::is_directory(recipes_dir)) {
    std::vector<fs::path> extra;
    for (const auto& f : fs::directory_iterator(recipes_dir)) {
      auto fname = f.path().filename().string();
      const std::string suffix = ".sh.tmpl";
      if (fname.size() <= suffix.size() || fname.compare(fname.size() - suffix.size(), suffix.size(), suffix))
        continue;
      auto name = fname.substr(0, fname.size() - suffix.size());
      if (!declared.count(name)) extra.push_back(f.path());
    }
    std::sort(extra.begin(), extra.end());
    for (const auto& p : extra) {
      auto fname = p.filename().string();
      auto name = fname.substr(0, fname.size() - 8);
      if (!is_identifier(name)) throw ParseError(p.string() + ": invalid recipe name");
      Recipe r;
      r.id = info.name + "::" + name;
      r.script = read_file(p);
      for (const auto& ph : placeholders(r.script)) {
        if (!is_runtime_var(ph))
          throw ParseError(p.string() + ": placeholder '{{" + ph + "}}' names no declared parameter");
      }
      recipes.push_back(std::move(r));
    }
  }
  registry.add_cookbook(std::move(info), std::move(recipes));
}

RecipeRegistry load_registry(const fs::path& root) {
  RecipeRegistry registry;
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "metadata.yaml")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) load_cookbook(registry, d);
  registry.check();
  return registry;
}

namespace {

const std::regex& placeholder_re() {
  static const std::regex re(R"(\{\{\s*([A-Za-z0-9_.\-]+)\s*\}\})");
  return re;
}

}  // namespace

std::vector<std::string> placeholders(std::string_view script) {
  std::vector<std::string> out;
  std::string s(script);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), placeholder_re()); it != std::sregex_iterator();
       ++it)
    out.push_back((*it)[1].str());
  return out;
}

ExecutableScript substitute_params(const Recipe& recipe, const AttributeTree& attrs,
                                   const RuntimeVars& runtime) {
  std::string in = recipe.script;
  std::string out;
  out.reserve(in.size());
  auto last = in.cbegin();
  for (auto it = std::sregex_iterator(in.begin(), in.end(), placeholder_re()); it != std::sregex_iterator();
       ++it) {
    const auto& m = *it;
    out.append(last, m[0].first);
    last = m[0].second;
    auto key = m[1].str();
    std::string value;
    if (auto rv = runtime.find(key); rv != runtime.end()) {
      value = rv->second;
    } else {
      const auto* decl = recipe.find_param(key);
      const Scalar* v = attrs.find(key);
      if (!v && decl && decl->default_value) v = &*decl->default_value;
      if (!v) throw ValidationError("unresolved placeholder '" + key + "' in " + recipe.id);
      if (decl) {
        if (auto err = check_param_value(*decl, *v))
          throw ValidationError("parameter '" + key + "' of " + recipe.id + ": " + *err);
        value = render_param_value(*decl, *v);
      } else {
        value = scalar_text(*v);
      }
    }
    if (std::regex_search(value, placeholder_re()))
      throw ValidationError("value of '" + key + "' contains placeholder syntax");
    out += value;
  }
  out.append(last, in.cend());
  // a value next to template braces can still form a new placeholder
  if (std::regex_search(out, placeholder_re()))
    throw ValidationError("substitution in " + recipe.id + " produced placeholder syntax");
  return {recipe.id, std::move(out), recipe.timeout};
}

}  // namespace benchforge
