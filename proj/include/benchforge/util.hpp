#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace benchforge {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; a counter-based generator when fed seed ^ index.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Milliseconds since the Unix epoch.
std::int64_t wall_ms();

/// Monotonic clock shared by every component that compares timestamps.
using MonoClock = std::chrono::steady_clock;

/// Monotonic microseconds since process start.
std::int64_t mono_us();

/// Epoch milliseconds that never go backwards: wall time at first call plus
/// monotonic elapsed time.
std::int64_t anchored_ms();

}  // namespace benchforge
