#include <algorithm>
#include <array>
#include <cstring>

#include "benchforge/kernels.hpp"

namespace benchforge::kernels::serial {

namespace {

struct Record {
  std::array<std::byte, kRecordSize> bytes;
  friend bool operator<(const Record& a, const Record& b) {
    return std::memcmp(a.bytes.data(), b.bytes.data(), kRecordSize) < 0;
  }
};
static_assert(sizeof(Record) == kRecordSize);

}  // namespace

void fill_records(std::span<std::byte> out, std::uint64_t first_index, std::uint64_t seed) {
  const auto n = out.size() / kRecordSize;
  for (std::size_t i = 0; i < n; ++i) make_record(seed, first_index + i, out.data() + i * kRecordSize);
}

void sort_records(std::span<std::byte> records) {
  auto* first = reinterpret_cast<Record*>(records.data());
  std::sort(first, first + records.size() / kRecordSize);
}

std::uint64_t multiset_hash(std::span<const std::byte> records) {
  std::uint64_t h = 0;
  for (std::size_t off = 0; off + kRecordSize <= records.size(); off += kRecordSize)
    h += record_hash(records.data() + off);
  return h;
}

bool is_sorted(std::span<const std::byte> records) {
  for (std::size_t off = kRecordSize; off + kRecordSize <= records.size(); off += kRecordSize)
    if (std::memcmp(records.data() + off - kRecordSize, records.data() + off, kKeySize) > 0) return false;
  return true;
}

}  // namespace benchforge::kernels::serial
