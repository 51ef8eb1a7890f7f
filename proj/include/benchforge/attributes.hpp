#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "benchforge/error.hpp"

namespace benchforge {

enum class ScalarKind { string, integer, decimal, boolean };

using Scalar = std::variant<std::string, std::int64_t, double, bool>;

ScalarKind kind_of(const Scalar& v) noexcept;
std::string_view kind_name(ScalarKind k) noexcept;
std::optional<ScalarKind> kind_from_name(std::string_view name) noexcept;

/// Canonical text form; decimals use the shortest round-trip representation.
std::string scalar_text(const Scalar& v);

/// Type inference for untyped text such as `--set` values:
/// true/false, integers, decimals, otherwise string.
Scalar infer_scalar(std::string_view text);

/// "100GB" -> 100 * 2^30. Binary suffixes B, KB, MB, GB, TB. Plain digits are bytes.
std::optional<std::uint64_t> parse_bytes(std::string_view text) noexcept;

/// Accepts `a.b.c` and `[:a][:b][:c]` forms; returns the dotted form.
/// Throws ValidationError on empty or malformed segments.
std::string normalize_key(std::string_view key);

/// Hierarchical key -> scalar configuration, stored as dotted leaf paths.
/// A path is either a leaf or an interior node, never both.
class AttributeTree {
 public:
  using Leaves = std::map<std::string, Scalar, std::less<>>;

  AttributeTree() = default;

  /// Inserts or replaces a leaf. Throws ValidationError when `key` would turn
  /// an existing leaf into an interior node or vice versa.
  void set(std::string_view key, Scalar value);

  const Scalar* find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }
  bool erase(std::string_view key);

  const Leaves& leaves() const noexcept { return leaves_; }
  bool empty() const noexcept { return leaves_.empty(); }
  std::size_t size() const noexcept { return leaves_.size(); }

  friend bool operator==(const AttributeTree&, const AttributeTree&) = default;

 private:
  Leaves leaves_;
};

struct AttributeConflict {
  std::string key;
  ScalarKind lower;
  ScalarKind higher;
};

class AttributeConflictError : public ValidationError {
 public:
  explicit AttributeConflictError(std::vector<AttributeConflict> conflicts);
  const std::vector<AttributeConflict>& conflicts() const noexcept { return conflicts_; }

 private:
  std::vector<AttributeConflict> conflicts_;
};

/// Per-leaf merge with precedence user > group > global. Throws
/// AttributeConflictError when one key carries different scalar kinds at
/// different levels.
AttributeTree merge_attributes(const AttributeTree& global, const AttributeTree& group,
                               const AttributeTree& user);

/// Two-level form of the same rule (higher wins).
AttributeTree merge_over(const AttributeTree& lower, const AttributeTree& higher);

}  // namespace benchforge
