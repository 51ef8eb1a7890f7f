#include "benchforge/attributes.hpp"

#include <cctype>
#include <charconv>

#include "benchforge/util.hpp"

namespace benchforge {

ScalarKind kind_of(const Scalar& v) noexcept { return static_cast<ScalarKind>(v.index()); }

std::string_view kind_name(ScalarKind k) noexcept {
  switch (k) {
    case ScalarKind::string: return "string";
    case ScalarKind::integer: return "integer";
    case ScalarKind::decimal: return "decimal";
    case ScalarKind::boolean: return "boolean";
  }
  return "?";
}

std::optional<ScalarKind> kind_from_name(std::string_view name) noexcept {
  if (name == "string") return ScalarKind::string;
  if (name == "integer") return ScalarKind::integer;
  if (name == "decimal") return ScalarKind::decimal;
  if (name == "boolean") return ScalarKind::boolean;
  return std::nullopt;
}

std::string scalar_text(const Scalar& v) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      auto s = format_double(d);
      // keep decimals distinguishable from integers in text form
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  };
  return std::visit(Visitor{}, v);
}

Scalar infer_scalar(std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  if (!text.empty()) {
    std::int64_t i = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), i);
    if (ec == std::errc{} && p == text.data() + text.size()) return i;
    bool looks_numeric = std::isdigit(static_cast<unsigned char>(text.back())) != 0;
    double d = 0;
    auto [pd, ecd] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (looks_numeric && ecd == std::errc{} && pd == text.data() + text.size()) return d;
  }
  return std::string(text);
}

std::optional<std::uint64_t> parse_bytes(std::string_view text) noexcept {
  std::uint64_t value = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || p == text.data()) return std::nullopt;
  std::string suffix;
  for (auto* q = p; q != text.data() + text.size(); ++q)
    suffix.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(*q))));
  int shift = 0;
  if (suffix.empty() || suffix == "B") shift = 0;
  else if (suffix == "KB" || suffix == "K") shift = 10;
  else if (suffix == "MB" || suffix == "M") shift = 20;
  else if (suffix == "GB" || suffix == "G") shift = 30;
  else if (suffix == "TB" || suffix == "T") shift = 40;
  else return std::nullopt;
  if (shift > 0 && value > (~std::uint64_t{0} >> shift)) return std::nullopt;
  return value << shift;
}

namespace {

bool valid_segment(std::string_view seg) {
  if (seg.empty()) return false;
  for (char c : seg) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

}  // namespace

std::string normalize_key(std::string_view key) {
  std::vector<std::string> segments;
  if (!key.empty() && key.front() == '[') {
    std::size_t pos = 0;
    while (pos < key.size()) {
      if (key[pos] != '[') throw ValidationError("malformed attribute key '" + std::string(key) + "'");
      auto close = key.find(']', pos);
      if (close == std::string_view::npos)
        throw ValidationError("malformed attribute key '" + std::string(key) + "'");
      auto seg = key.substr(pos + 1, close - pos - 1);
      if (!seg.empty() && seg.front() == ':') seg.remove_prefix(1);
      segments.emplace_back(seg);
      pos = close + 1;
    }
  } else {
    segments = split(key, '.');
  }
  std::string out;
  for (const auto& seg : segments) {
    if (!valid_segment(seg))
      throw ValidationError("malformed attribute key '" + std::string(key) + "'");
    if (!out.empty()) out += '.';
    out += seg;
  }
  if (out.empty()) throw ValidationError("empty attribute key");
  return out;
}

void AttributeTree::set(std::string_view raw_key, Scalar value) {
  auto key = normalize_key(raw_key);
  // an ancestor may not be a leaf
  for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', dot + 1)) {
    if (leaves_.find(std::string_view(key).substr(0, dot)) != leaves_.end())
      throw ValidationError("attribute '" + key + "' nests under leaf '" + key.substr(0, dot) + "'");
  }
  // nor may the key itself be an interior node
  auto prefix = key + ".";
  auto it = leaves_.lower_bound(prefix);
  if (it != leaves_.end() && starts_with(it->first, prefix))
    throw ValidationError("attribute '" + key + "' is already a subtree");
  leaves_.insert_or_assign(std::move(key), std::move(value));
}

const Scalar* AttributeTree::find(std::string_view key) const {
  auto it = leaves_.find(key);
  if (it == leaves_.end()) {
    std::string normalized;
    try {
      normalized = normalize_key(key);
    } catch (const ValidationError&) {
      return nullptr;
    }
    it = leaves_.find(normalized);
    if (it == leaves_.end()) return nullptr;
  }
  return &it->second;
}

bool AttributeTree::erase(std::string_view key) {
  auto it = leaves_.find(key);
  if (it == leaves_.end()) return false;
  leaves_.erase(it);
  return true;
}

namespace {

std::string describe(const std::vector<AttributeConflict>& conflicts) {
  std::string msg = "attribute type conflict:";
  for (const auto& c : conflicts) {
    msg += " '" + c.key + "' (" + std::string(kind_name(c.lower)) + " vs " +
           std::string(kind_name(c.higher)) + ")";
  }
  return msg;
}

void overlay(AttributeTree& acc, const AttributeTree& higher,
             std::vector<AttributeConflict>& conflicts) {
  for (const auto& [key, value] : higher.leaves()) {
    if (const auto* existing = acc.find(key); existing && kind_of(*existing) != kind_of(value)) {
      conflicts.push_back({key, kind_of(*existing), kind_of(value)});
      continue;
    }
    try {
      acc.set(key, value);
    } catch (const ValidationError&) {
      conflicts.push_back({key, kind_of(value), kind_of(value)});
    }
  }
}

}  // namespace

AttributeConflictError::AttributeConflictError(std::vector<AttributeConflict> conflicts)
    : ValidationError(describe(conflicts)), conflicts_(std::move(conflicts)) {}

AttributeTree merge_over(const AttributeTree& lower, const AttributeTree& higher) {
  AttributeTree acc = lower;
  std::vector<AttributeConflict> conflicts;
  overlay(acc, higher, conflicts);
  if (!conflicts.empty()) throw AttributeConflictError(std::move(conflicts));
  return acc;
}

AttributeTree merge_attributes(const AttributeTree& global, const AttributeTree& group,
                               const AttributeTree& user) {
  AttributeTree acc = global;
  std::vector<AttributeConflict> conflicts;
  overlay(acc, group, conflicts);
  overlay(acc, user, conflicts);
  if (!conflicts.empty()) throw AttributeConflictError(std::move(conflicts));
  return acc;
}

}  // namespace benchforge
