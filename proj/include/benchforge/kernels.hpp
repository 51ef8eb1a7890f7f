#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace benchforge::kernels {

inline constexpr std::size_t kRecordSize = 100;
inline constexpr std::size_t kKeySize = 10;

/// Record layout (100 bytes): 10-byte key, 0x00 0x11, 32 hex digits of the
/// record index, 0x88 0x99 0xAA 0xBB, 48 filler bytes, 0xCC 0xDD 0xEE 0xFF.
/// Keys are a pure function of (seed, index), so any partition of the index
/// range produces the same bytes.
void make_record(std::uint64_t seed, std::uint64_t index, std::byte* out) noexcept;

/// Order-independent hash of a record multiset (sum of per-record hashes).
std::uint64_t record_hash(const std::byte* record) noexcept;

namespace serial {

void fill_records(std::span<std::byte> out, std::uint64_t first_index, std::uint64_t seed);
/// Sorts ascending by the whole record (key first, unsigned lexicographic).
void sort_records(std::span<std::byte> records);
std::uint64_t multiset_hash(std::span<const std::byte> records);
bool is_sorted(std::span<const std::byte> records);

}  // namespace serial

/// OpenMP variants; bit-identical results to `serial`.
namespace parallel {

void fill_records(std::span<std::byte> out, std::uint64_t first_index, std::uint64_t seed);
void sort_records(std::span<std::byte> records);
std::uint64_t multiset_hash(std::span<const std::byte> records);
bool is_sorted(std::span<const std::byte> records);

}  // namespace parallel

using parallel::fill_records;
using parallel::is_sorted;
using parallel::multiset_hash;
using parallel::sort_records;

int max_threads() noexcept;

}  // namespace benchforge::kernels
