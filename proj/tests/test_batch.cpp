#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include "benchforge/batch.hpp"
#include "benchforge/kernels.hpp"
#include "support.hpp"

using namespace benchforge;
namespace fs = std::filesystem;

namespace {

using Rec = std::array<unsigned char, 100>;

std::vector<Rec> load(const fs::path& p) {
  auto text = read_file(p);
  std::vector<Rec> out(text.size() / 100);
  std::memcpy(out.data(), text.data(), text.size());
  return out;
}

void store(const fs::path& p, const std::vector<Rec>& recs) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(recs.data()), static_cast<std::streamsize>(recs.size() * 100));
}

std::uint64_t unlimited(const fs::path&) { return ~0ULL; }

}  // namespace

TEST(GenRecords, SizeIsHundredTimesCount) {
  bftest::TempDir tmp;
  for (std::uint64_t n : {0u, 1u, 5u, 1000u}) {
    auto f = gen_records(n, 42, tmp / ("r" + std::to_string(n)));
    EXPECT_EQ(fs::file_size(f.path), 100 * n);
    EXPECT_EQ(f.record_count, n);
    EXPECT_EQ(f.bytes(), 100 * n);
  }
}

TEST(GenRecords, DeterministicPerSeed) {
  bftest::TempDir tmp;
  gen_records(200000, 1, tmp / "a");
  gen_records(200000, 1, tmp / "b");
  gen_records(200000, 2, tmp / "c");
  EXPECT_EQ(read_file(tmp / "a"), read_file(tmp / "b"));
  EXPECT_NE(read_file(tmp / "a"), read_file(tmp / "c"));
}

TEST(OpenRecordFile, RejectsPartialRecords) {
  bftest::TempDir tmp;
  write_file(tmp / "bad", std::string(150, 'x'));
  EXPECT_THROW(open_record_file(tmp / "bad"), CorruptRecordError);
  write_file(tmp / "good", std::string(300, 'x'));
  EXPECT_EQ(open_record_file(tmp / "good").record_count, 3u);
  EXPECT_THROW(open_record_file(tmp / "missing"), Error);
}

TEST(StorageRequirement, FourTimesInput) {
  EXPECT_EQ(storage_requirement(200'000'000'000ULL), 800'000'000'000ULL);
  EXPECT_EQ(storage_requirement(0), 0u);
}

TEST(PreflightStorage, RefusesBelowRequirement) {
  bftest::TempDir tmp;
  auto free_of = [](std::uint64_t bytes) { return [bytes](const fs::path&) { return bytes; }; };
  EXPECT_NO_THROW(preflight_storage(100, tmp.path(), free_of(400)));
  try {
    preflight_storage(100, tmp.path(), free_of(399));
    FAIL();
  } catch (const InsufficientStorageError& e) {
    EXPECT_EQ(e.required(), 400u);
    EXPECT_EQ(e.available(), 399u);
    EXPECT_EQ(e.shortfall(), 1u);
  }
  EXPECT_GT(free_space(tmp / "not" / "yet" / "created"), 0u);
}

TEST(ExternalSort, RefusedWithoutStorage) {
  bftest::TempDir tmp;
  auto in = gen_records(10, 1, tmp / "in");
  EXPECT_THROW(external_sort(in, 16 << 20, tmp / "tmp", tmp / "out", [](const fs::path&) { return 3999ULL; }),
               InsufficientStorageError);
  EXPECT_FALSE(fs::exists(tmp / "out"));
}

TEST(ExternalSort, MemoryFloor) {
  bftest::TempDir tmp;
  auto in = gen_records(10, 1, tmp / "in");
  EXPECT_THROW(external_sort(in, kMinSortMemory - 1, tmp / "tmp", tmp / "out", unlimited), Error);
}

TEST(ExternalSortProperty, ByteEqualToInMemoryOracle) {
  bftest::TempDir tmp;
  bftest::Rng rng(47);
  for (int trial = 0; trial < 25; ++trial) {
    auto n = static_cast<std::uint64_t>(rng.between(0, 10000));
    auto in = gen_records(n, static_cast<std::uint64_t>(trial), tmp / "in");
    auto recs = load(in.path);
    switch (trial % 3) {
      case 1: std::sort(recs.begin(), recs.end()); break;
      case 2: std::sort(recs.rbegin(), recs.rend()); break;
      default: break;
    }
    if (trial % 5 == 4 && n > 2) recs[1] = recs[0];  // duplicate keys
    store(in.path, recs);
    auto oracle = recs;
    std::sort(oracle.begin(), oracle.end());
    auto res = external_sort(open_record_file(in.path), 16 << 20, tmp / "tmp", tmp / "out", unlimited);
    EXPECT_EQ(res.output.record_count, n);
    EXPECT_EQ(load(tmp / "out"), oracle) << "trial " << trial << " n=" << n;
  }
}

TEST(ExternalSort, SpillsAndMergesRuns) {
  bftest::TempDir tmp;
  auto in = gen_records(250000, 5, tmp / "in");
  auto oracle = load(in.path);
  std::sort(oracle.begin(), oracle.end());
  auto res = external_sort(in, kMinSortMemory, tmp / "tmp", tmp / "out", unlimited);
  EXPECT_EQ(res.runs, 3u);
  EXPECT_EQ(load(tmp / "out"), oracle);
  std::size_t leftovers = 0;
  for (const auto& e : fs::directory_iterator(tmp / "tmp")) leftovers += e.is_regular_file();
  EXPECT_EQ(leftovers, 0u);
}

TEST(DigestRecordFile, HashAndOrder) {
  bftest::TempDir tmp;
  auto in = gen_records(3000, 8, tmp / "in");
  auto d = digest_record_file(in);
  EXPECT_EQ(d.records, 3000u);
  EXPECT_FALSE(d.key_sorted);
  auto res = external_sort(in, 16 << 20, tmp / "tmp", tmp / "out", unlimited);
  auto o = digest_record_file(res.output);
  EXPECT_TRUE(o.key_sorted);
  EXPECT_EQ(o.multiset_hash, d.multiset_hash);
}

TEST(SortWithEngine, ExternalCommandIsVerified) {
  bftest::TempDir tmp;
  auto in = gen_records(1000, 2, tmp / "in");
  auto copy = sort_with_engine(in, tmp / "copy", 16 << 20, tmp / "tmp", "cat", "cat \"$BF_INPUT\" > \"$BF_OUTPUT\"",
                               unlimited);
  EXPECT_EQ(copy.engine, "cat");
  EXPECT_FALSE(copy.sorted);
  auto builtin = sort_with_engine(in, tmp / "sorted", 16 << 20, tmp / "tmp", "builtin", {}, unlimited);
  EXPECT_TRUE(builtin.sorted);
  EXPECT_EQ(builtin.output_hash, copy.output_hash);
  EXPECT_THROW(sort_with_engine(in, tmp / "x", 16 << 20, tmp / "tmp", "bad", "exit 7", unlimited), Error);
  EXPECT_THROW(sort_with_engine(in, tmp / "y", 16 << 20, tmp / "tmp", "short", "head -c 500 \"$BF_INPUT\" > \"$BF_OUTPUT\"",
                                unlimited),
               Error);
}

TEST(RunBatchExperiment, EmptyAndMillion) {
  bftest::TempDir tmp;
  BatchParams p;
  p.work_dir = tmp / "w0";
  auto zero = run_batch_experiment(p);
  EXPECT_EQ(zero.records, 0u);
  EXPECT_EQ(zero.input_bytes, 0u);
  EXPECT_TRUE(zero.sorted);

  p.records = 1000000;
  p.work_dir = tmp / "w1";
  auto big = run_batch_experiment(p);
  EXPECT_EQ(big.input_bytes, 100000000u);
  EXPECT_TRUE(big.sorted);
  EXPECT_GE(big.execution_time_ms, 0);
  EXPECT_FALSE(fs::exists(tmp / "w1" / "input.bin"));

  auto back = BatchResult::from_json(big.to_json());
  EXPECT_EQ(back.output_hash, big.output_hash);
  EXPECT_EQ(back.execution_time_ms, big.execution_time_ms);
  EXPECT_EQ(big.to_json()["kind"], "batch");
}

TEST(RunBatchExperiment, PreflightRefusesBeforeWriting) {
  bftest::TempDir tmp;
  BatchParams p;
  p.records = 1000;
  p.work_dir = tmp / "w";
  EXPECT_THROW(run_batch_experiment(p, [](const fs::path&) { return 1000ULL; }), InsufficientStorageError);
  EXPECT_FALSE(fs::exists(tmp / "w" / "input.bin"));
}
