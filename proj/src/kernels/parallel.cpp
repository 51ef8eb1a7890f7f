#include <omp.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <vector>

#include "benchforge/kernels.hpp"

namespace benchforge::kernels {

int max_threads() noexcept { return omp_get_max_threads(); }

namespace parallel {

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
  const auto n = static_cast<std::int64_t>(out.size() / kRecordSize);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    make_record(seed, first_index + static_cast<std::uint64_t>(i), out.data() + i * kRecordSize);
}

void sort_records(std::span<std::byte> records) {
  auto* base = reinterpret_cast<Record*>(records.data());
  const std::size_t n = records.size() / kRecordSize;
  const std::size_t threads = static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
  if (threads == 1 || n < 4096) {
    std::sort(base, base + n);
    return;
  }
  std::size_t parts = 1;
  while (parts < threads) parts <<= 1;
  std::vector<std::size_t> bounds(parts + 1);
  for (std::size_t p = 0; p <= parts; ++p) bounds[p] = n * p / parts;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(parts); ++p)
    std::sort(base + bounds[p], base + bounds[p + 1]);
  // pairwise merge rounds; a total order on whole records makes the result unique
  for (std::size_t width = 1; width < parts; width <<= 1) {
    const auto pairs = static_cast<std::int64_t>(parts / (2 * width));
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t q = 0; q < pairs; ++q) {
      auto lo = bounds[q * 2 * width], mid = bounds[q * 2 * width + width], hi = bounds[(q + 1) * 2 * width];
      std::inplace_merge(base + lo, base + mid, base + hi);
    }
  }
}

std::uint64_t multiset_hash(std::span<const std::byte> records) {
  const auto n = static_cast<std::int64_t>(records.size() / kRecordSize);
  std::uint64_t h = 0;
#pragma omp parallel for reduction(+ : h) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) h += record_hash(records.data() + i * kRecordSize);
  return h;
}

bool is_sorted(std::span<const std::byte> records) {
  const auto n = static_cast<std::int64_t>(records.size() / kRecordSize);
  int violations = 0;
#pragma omp parallel for reduction(+ : violations) schedule(static)
  for (std::int64_t i = 1; i < n; ++i)
    if (std::memcmp(records.data() + (i - 1) * kRecordSize, records.data() + i * kRecordSize, kKeySize) > 0)
      ++violations;
  return violations == 0;
}

}  // namespace parallel
}  // namespace benchforge::kernels
