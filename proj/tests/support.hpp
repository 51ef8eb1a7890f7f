#pragma once

#include <stdlib.h>

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include "benchforge/util.hpp"

namespace bftest {

namespace fs = std::filesystem;

inline fs::path source_dir() { return BENCHFORGE_SOURCE_DIR; }
inline fs::path bf_exe() { return BENCHFORGE_BF_EXE; }

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "bftest-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const fs::path& p) const { return path_ / p; }

 private:
  fs::path path_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::int64_t between(std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(gen_); }
  template <class T>
  const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(between(0, static_cast<std::int64_t>(v.size()) - 1))]; }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// Writes `<root>/<name>/metadata.yaml` and one template per entry of `scripts`.
inline fs::path write_cookbook(const fs::path& root, const std::string& name, const std::string& metadata,
                               const std::map<std::string, std::string>& scripts) {
  auto dir = root / name;
  benchforge::write_file(dir / "metadata.yaml", metadata);
  for (const auto& [recipe, text] : scripts) benchforge::write_file(dir / "recipes" / (recipe + ".sh.tmpl"), text);
  return dir;
}

/// Hadoop parse fixture: namenodes run nn+rm, datanodes run dn+nm.
inline constexpr const char* kHadoopFull = R"(name: hadoop
provider:
  backend: local
  instance_profile: m3.xlarge
cookbooks:
  hadoop: {locator: cookbooks/hadoop, version: "2.7.1"}
groups:
  namenodes:
    size: 1
    recipes: [hadoop::nn, hadoop::rm]
  datanodes:
    size: 2
    recipes: [hadoop::dn, hadoop::nm]
)";

}  // namespace bftest
