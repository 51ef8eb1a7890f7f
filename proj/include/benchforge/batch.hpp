#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "benchforge/error.hpp"

namespace benchforge {

inline constexpr std::uint64_t kRecordBytes = 100;
inline constexpr std::uint64_t kMinSortMemory = 10ULL << 20;

/// Fixed-size binary record file; size is exactly 100 * record_count bytes.
struct RecordFile {
  std::filesystem::path path;
  std::uint64_t record_count = 0;

  std::uint64_t bytes() const noexcept { return record_count * kRecordBytes; }
};

class CorruptRecordError : public Error {
 public:
  using Error::Error;
};

class InsufficientStorageError : public Error {
 public:
  InsufficientStorageError(std::uint64_t required, std::uint64_t available);
  std::uint64_t required() const noexcept { return required_; }
  std::uint64_t available() const noexcept { return available_; }
  std::uint64_t shortfall() const noexcept { return required_ - available_; }

 private:
  std::uint64_t required_;
  std::uint64_t available_;
};

/// Opens an existing record file; throws CorruptRecordError when its size is
/// not a multiple of 100.
RecordFile open_record_file(const std::filesystem::path& path);

/// Writes n deterministic records (keys from `seed`, payload carries the index).
RecordFile gen_records(std::uint64_t n, std::uint64_t seed, const std::filesystem::path& out);

/// Capacity needed to process `input_bytes`: the input plus three times its
/// size for replicas and temporaries.
constexpr std::uint64_t storage_requirement(std::uint64_t input_bytes) noexcept { return input_bytes * 4; }

using FreeSpaceFn = std::function<std::uint64_t(const std::filesystem::path&)>;

/// Free bytes on the volume holding `dir` (nearest existing ancestor).
std::uint64_t free_space(const std::filesystem::path& dir);

/// Throws InsufficientStorageError naming the shortfall when `dir`'s volume
/// has less than storage_requirement(input_bytes) free.
void preflight_storage(std::uint64_t input_bytes, const std::filesystem::path& dir,
                       const FreeSpaceFn& free = free_space);

struct SortResult {
  RecordFile output;
  std::int64_t execution_time_ms = 0;
  std::size_t runs = 0;  // sorted runs spilled before merging
};

/// Sorts records ascending by their 10-byte key (unsigned lexicographic,
/// ties by the remaining bytes) with at most `memory_limit` bytes of record
/// buffers, spilling sorted runs to `tmp`.
SortResult external_sort(const RecordFile& input, std::uint64_t memory_limit,
                         const std::filesystem::path& tmp, const std::filesystem::path& output,
                         const FreeSpaceFn& free = free_space);

struct BatchParams {
  std::uint64_t records = 0;
  std::uint64_t memory_limit = 16ULL << 20;
  std::uint64_t seed = 42;
  std::string engine_label = "builtin";
  /// Shell command replacing the built-in sort. It sees BF_INPUT, BF_OUTPUT,
  /// BF_MEMORY_LIMIT and BF_TMP in its environment.
  std::string engine_cmd;
  std::filesystem::path work_dir = ".";
  bool keep_data = false;
};

struct BatchResult {
  std::string engine;
  std::uint64_t records = 0;
  std::uint64_t input_bytes = 0;
  std::int64_t execution_time_ms = 0;
  std::int64_t datagen_time_ms = 0;
  std::string output_hash;  // multiset hash of the sorted output
  bool sorted = false;

  nlohmann::json to_json() const;
  static BatchResult from_json(const nlohmann::json& j);
};

/// Sorts `input` into `output` with the built-in external sort, or with
/// `engine_cmd` when nonempty, and verifies the output (record count,
/// multiset hash, key order). datagen_time_ms is left 0.
BatchResult sort_with_engine(const RecordFile& input, const std::filesystem::path& output,
                             std::uint64_t memory_limit, const std::filesystem::path& tmp,
                             const std::string& engine_label, const std::string& engine_cmd = {},
                             const FreeSpaceFn& free = free_space);

/// Preflight, datagen, then sort (built-in or engine_cmd). Throws on any
/// phase failure.
BatchResult run_batch_experiment(const BatchParams& params, const FreeSpaceFn& free = free_space);

struct FileDigest {
  std::uint64_t multiset_hash = 0;
  bool key_sorted = false;
  std::uint64_t records = 0;
};

/// Streams a record file once: multiset hash plus key-monotonicity.
FileDigest digest_record_file(const RecordFile& file);

}  // namespace benchforge
