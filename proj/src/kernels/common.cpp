#include <cstring>

#include "benchforge/kernels.hpp"
#include "benchforge/util.hpp"

namespace benchforge::kernels {

void make_record(std::uint64_t seed, std::uint64_t index, std::byte* out) noexcept {
  const std::uint64_t h1 = mix64(seed ^ mix64(index));
  const std::uint64_t h2 = mix64(h1 ^ 0x5851f42d4c957f2dULL);
  auto* p = reinterpret_cast<unsigned char*>(out);
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(h1 >> (56 - 8 * i));
  p[8] = static_cast<unsigned char>(h2 >> 56);
  p[9] = static_cast<unsigned char>(h2 >> 48);
  p[10] = 0x00;
  p[11] = 0x11;
  static constexpr char hex[] = "0123456789ABCDEF";
  for (int i = 0; i < 32; ++i) {
    int shift = 4 * (31 - i);
    p[12 + i] = shift < 64 ? static_cast<unsigned char>(hex[(index >> shift) & 0xF]) : '0';
  }
  p[44] = 0x88;
  p[45] = 0x99;
  p[46] = 0xAA;
  p[47] = 0xBB;
  for (int i = 0; i < 48; ++i) p[48 + i] = static_cast<unsigned char>('A' + (index + static_cast<unsigned>(i)) % 26);
  p[96] = 0xCC;
  p[97] = 0xDD;
  p[98] = 0xEE;
  p[99] = 0xFF;
}

std::uint64_t record_hash(const std::byte* record) noexcept {
  return mix64(fnv1a64(std::string_view(reinterpret_cast<const char*>(record), kRecordSize)));
}

}  // namespace benchforge::kernels
