// Serial vs OpenMP record kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cstddef>
#include <vector>

#include "benchforge/kernels.hpp"

namespace k = benchforge::kernels;

namespace {

std::vector<std::byte> records(std::int64_t n) {
  std::vector<std::byte> buf(static_cast<std::size_t>(n) * k::kRecordSize);
  k::parallel::fill_records(buf, 0, 42);
  return buf;
}

template <void (*Fill)(std::span<std::byte>, std::uint64_t, std::uint64_t)>
void BM_Fill(benchmark::State& state) {
  std::vector<std::byte> buf(static_cast<std::size_t>(state.range(0)) * k::kRecordSize);
  for (auto _ : state) {
    Fill(buf, 0, 42);
    benchmark::DoNotOptimize(buf.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(buf.size()));
}

template <void (*Sort)(std::span<std::byte>)>
void BM_Sort(benchmark::State& state) {
  const auto input = records(state.range(0));
  std::vector<std::byte> work;
  for (auto _ : state) {
    state.PauseTiming();
    work = input;
    state.ResumeTiming();
    Sort(work);
    benchmark::DoNotOptimize(work.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(input.size()));
}

template <std::uint64_t (*Hash)(std::span<const std::byte>)>
void BM_Hash(benchmark::State& state) {
  const auto input = records(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(Hash(input));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(input.size()));
}

template <bool (*Sorted)(std::span<const std::byte>)>
void BM_IsSorted(benchmark::State& state) {
  auto input = records(state.range(0));
  k::parallel::sort_records(input);
  for (auto _ : state) benchmark::DoNotOptimize(Sorted(input));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(input.size()));
}

}  // namespace

BENCHMARK(BM_Fill<k::serial::fill_records>)->Name("fill/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Fill<k::parallel::fill_records>)->Name("fill/parallel")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Sort<k::serial::sort_records>)->Name("sort/serial")->Arg(1 << 16)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Sort<k::parallel::sort_records>)->Name("sort/parallel")->Arg(1 << 16)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Hash<k::serial::multiset_hash>)->Name("hash/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Hash<k::parallel::multiset_hash>)->Name("hash/parallel")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_IsSorted<k::serial::is_sorted>)->Name("is_sorted/serial")->Arg(1 << 20);
BENCHMARK(BM_IsSorted<k::parallel::is_sorted>)->Name("is_sorted/parallel")->Arg(1 << 20);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
