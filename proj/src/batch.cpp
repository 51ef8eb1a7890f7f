#include "benchforge/batch.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <queue>
#include <vector>

#include "benchforge/kernels.hpp"
#include "benchforge/process.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kBlockRecords = 1 << 16;
constexpr std::size_t kMaxFanIn = 64;

std::string byte_text(std::uint64_t b) { return std::to_string(b) + " bytes"; }

std::int64_t elapsed_ms(MonoClock::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(MonoClock::now() - since).count();
}

void read_exact(std::ifstream& in, std::byte* dst, std::size_t n, const fs::path& path) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError("short read from " + path.string());
}

void write_all(std::ofstream& out, const std::byte* src, std::size_t n, const fs::path& path) {
  out.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed: " + path.string());
}

class RunReader {
 public:
  RunReader(fs::path path, std::size_t buffer_records) : path_(std::move(path)), in_(path_, std::ios::binary) {
    if (!in_) throw IoError("cannot open run " + path_.string());
    remaining_ = fs::file_size(path_) / kRecordBytes;
    buffer_.resize(std::max<std::size_t>(1, buffer_records) * kRecordBytes);
    refill();
  }
  bool done() const noexcept { return pos_ == end_; }
  const std::byte* current() const noexcept { return buffer_.data() + pos_; }
  void advance() {
    pos_ += kRecordBytes;
    if (pos_ == end_) refill();
  }

 private:
  void refill() {
    auto take = std::min<std::uint64_t>(remaining_, buffer_.size() / kRecordBytes);
    pos_ = 0;
    end_ = static_cast<std::size_t>(take * kRecordBytes);
    if (take) read_exact(in_, buffer_.data(), end_, path_);
    remaining_ -= take;
  }

  fs::path path_;
  std::ifstream in_;
  std::vector<std::byte> buffer_;
  std::uint64_t remaining_ = 0;
  std::size_t pos_ = 0, end_ = 0;
};

void merge_runs(const std::vector<fs::path>& runs, const fs::path& out_path, std::uint64_t memory_limit) {
  const std::size_t budget_records = static_cast<std::size_t>(memory_limit / kRecordBytes);
  const std::size_t per_buffer = std::max<std::size_t>(1, budget_records / (runs.size() + 1));
  std::vector<std::unique_ptr<RunReader>> readers;
  for (const auto& r : runs) readers.push_back(std::make_unique<RunReader>(r, per_buffer));
  auto greater = [&](std::size_t a, std::size_t b) {
    return std::memcmp(readers[a]->current(), readers[b]->current(), kRecordBytes) > 0;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> heap(greater);
  for (std::size_t i = 0; i < readers.size(); ++i)
    if (!readers[i]->done()) heap.push(i);

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  std::vector<std::byte> obuf(per_buffer * kRecordBytes);
  std::size_t fill = 0;
  while (!heap.empty()) {
    auto i = heap.top();
    heap.pop();
    std::memcpy(obuf.data() + fill, readers[i]->current(), kRecordBytes);
    fill += kRecordBytes;
    if (fill == obuf.size()) {
      write_all(out, obuf.data(), fill, out_path);
      fill = 0;
    }
    readers[i]->advance();
    if (!readers[i]->done()) heap.push(i);
  }
  write_all(out, obuf.data(), fill, out_path);
}

}  // namespace

InsufficientStorageError::InsufficientStorageError(std::uint64_t required, std::uint64_t available)
    : Error("insufficient storage: need " + byte_text(required) + ", " + byte_text(available) +
            " free (short by " + byte_text(required - available) + ")"),
      required_(required),
      available_(available) {}

RecordFile open_record_file(const fs::path& path) {
  std::error_code ec;
  auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
  if (size % kRecordBytes != 0)
    throw CorruptRecordError(path.string() + ": size " + std::to_string(size) + " is not a multiple of 100");
  return {path, size / kRecordBytes};
}

RecordFile gen_records(std::uint64_t n, std::uint64_t seed, const fs::path& out_path) {
  if (out_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out_path.parent_path(), ec);
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + out_path.string());
  std::vector<std::byte> block(static_cast<std::size_t>(std::min(n, kBlockRecords) * kRecordBytes));
  for (std::uint64_t first = 0; first < n; first += kBlockRecords) {
    auto count = std::min(kBlockRecords, n - first);
    std::span<std::byte> span(block.data(), static_cast<std::size_t>(count * kRecordBytes));
    kernels::fill_records(span, first, seed);
    write_all(out, span.data(), span.size(), out_path);
  }
  out.close();
  if (!out) throw IoError("write failed: " + out_path.string());
  return {out_path, n};
}

std::uint64_t free_space(const fs::path& dir) {
  auto p = fs::absolute(dir);
  while (!fs::exists(p) && p.has_parent_path() && p != p.parent_path()) p = p.parent_path();
  return fs::space(p).available;
}

void preflight_storage(std::uint64_t input_bytes, const fs::path& dir, const FreeSpaceFn& free) {
  auto required = storage_requirement(input_bytes);
  auto available = free(dir);
  if (available < required) throw InsufficientStorageError(required, available);
}

SortResult external_sort(const RecordFile& input, std::uint64_t memory_limit, const fs::path& tmp,
                         const fs::path& output, const FreeSpaceFn& free) {
  if (memory_limit < kMinSortMemory)
    throw Error("memory limit " + byte_text(memory_limit) + " below minimum " + byte_text(kMinSortMemory));
  auto checked = open_record_file(input.path);
  if (checked.record_count != input.record_count)
    throw CorruptRecordError(input.path.string() + ": record count changed");
  fs::create_directories(tmp);
  preflight_storage(input.bytes(), tmp, free);

  const auto start = MonoClock::now();
  const std::uint64_t chunk_records = memory_limit / kRecordBytes;
  std::ifstream in(input.path, std::ios::binary);
  if (!in) throw IoError("cannot open " + input.path.string());
  if (output.has_parent_path()) fs::create_directories(output.parent_path());

  SortResult result;
  std::vector<std::byte> chunk;
  if (input.record_count <= chunk_records) {
    chunk.resize(static_cast<std::size_t>(input.bytes()));
    read_exact(in, chunk.data(), chunk.size(), input.path);
    kernels::sort_records(chunk);
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + output.string());
    write_all(out, chunk.data(), chunk.size(), output);
    result.runs = input.record_count ? 1 : 0;
  } else {
    std::vector<fs::path> runs;
    chunk.resize(static_cast<std::size_t>(chunk_records * kRecordBytes));
    const auto tag = hex64(mix64(static_cast<std::uint64_t>(mono_us())));
    for (std::uint64_t done = 0; done < input.record_count;) {
      auto count = std::min(chunk_records, input.record_count - done);
      std::span<std::byte> span(chunk.data(), static_cast<std::size_t>(count * kRecordBytes));
      read_exact(in, span.data(), span.size(), input.path);
      kernels::sort_records(span);
      auto run_path = tmp / ("run-" + tag + "-" + std::to_string(runs.size()) + ".bin");
      std::ofstream out(run_path, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + run_path.string());
      write_all(out, span.data(), span.size(), run_path);
      runs.push_back(run_path);
      done += count;
    }
    result.runs = runs.size();
    chunk.clear();
    chunk.shrink_to_fit();
    std::size_t pass = 0;
    while (runs.size() > kMaxFanIn) {
      std::vector<fs::path> next;
      for (std::size_t i = 0; i < runs.size(); i += kMaxFanIn) {
        std::vector<fs::path> group(runs.begin() + static_cast<std::ptrdiff_t>(i),
                                    runs.begin() + static_cast<std::ptrdiff_t>(std::min(runs.size(), i + kMaxFanIn)));
        auto merged = tmp / ("run-" + tag + "-p" + std::to_string(pass) + "-" + std::to_string(next.size()) + ".bin");
        merge_runs(group, merged, memory_limit);
        for (const auto& g : group) fs::remove(g);
        next.push_back(merged);
      }
      runs = std::move(next);
      ++pass;
    }
    merge_runs(runs, output, memory_limit);
    for (const auto& r : runs) fs::remove(r);
  }
  result.execution_time_ms = elapsed_ms(start);
  result.output = {output, input.record_count};
  return result;
}

FileDigest digest_record_file(const RecordFile& file) {
  FileDigest d;
  d.key_sorted = true;
  std::ifstream in(file.path, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.path.string());
  std::vector<std::byte> block(static_cast<std::size_t>(kBlockRecords * kRecordBytes));
  std::byte last_key[kernels::kKeySize] = {};
  bool have_last = false;
  for (std::uint64_t done = 0; done < file.record_count;) {
    auto count = std::min(kBlockRecords, file.record_count - done);
    std::span<std::byte> span(block.data(), static_cast<std::size_t>(count * kRecordBytes));
    read_exact(in, span.data(), span.size(), file.path);
    d.multiset_hash += kernels::multiset_hash(span);
    if (have_last && std::memcmp(last_key, span.data(), kernels::kKeySize) > 0) d.key_sorted = false;
    if (!kernels::is_sorted(span)) d.key_sorted = false;
    std::memcpy(last_key, span.data() + span.size() - kRecordBytes, kernels::kKeySize);
    have_last = true;
    done += count;
  }
  d.records = file.record_count;
  return d;
}

nlohmann::json BatchResult::to_json() const {
  return {{"kind", "batch"},
          {"engine", engine},
          {"records", records},
          {"input_bytes", input_bytes},
          {"execution_time_ms", execution_time_ms},
          {"datagen_time_ms", datagen_time_ms},
          {"output_hash", output_hash},
          {"sorted", sorted}};
}

BatchResult BatchResult::from_json(const nlohmann::json& j) {
  BatchResult r;
  r.engine = j.value("engine", "builtin");
  r.records = j.value("records", std::uint64_t{0});
  r.input_bytes = j.at("input_bytes").get<std::uint64_t>();
  r.execution_time_ms = j.at("execution_time_ms").get<std::int64_t>();
  r.datagen_time_ms = j.value("datagen_time_ms", std::int64_t{0});
  r.output_hash = j.value("output_hash", "");
  r.sorted = j.value("sorted", false);
  return r;
}

BatchResult sort_with_engine(const RecordFile& input, const fs::path& output, std::uint64_t memory_limit,
                             const fs::path& tmp, const std::string& engine_label, const std::string& engine_cmd,
                             const FreeSpaceFn& free) {
  BatchResult result;
  result.engine = engine_label;
  result.records = input.record_count;
  result.input_bytes = input.bytes();
  if (engine_cmd.empty()) {
    result.execution_time_ms = external_sort(input, memory_limit, tmp, output, free).execution_time_ms;
  } else {
    fs::create_directories(tmp);
    preflight_storage(input.bytes(), tmp, free);
    ProcessSpec spec;
    spec.argv = {"/bin/sh", "-c", engine_cmd};
    spec.env = {{"BF_INPUT", fs::absolute(input.path).string()},
                {"BF_OUTPUT", fs::absolute(output).string()},
                {"BF_MEMORY_LIMIT", std::to_string(memory_limit)},
                {"BF_TMP", fs::absolute(tmp).string()}};
    auto start = MonoClock::now();
    auto outcome = run_process(spec);
    result.execution_time_ms = elapsed_ms(start);
    if (outcome.exit_code != 0)
      throw Error("engine command exited with " + std::to_string(outcome.exit_code) + ": " + trim(outcome.err));
  }
  auto digest = digest_record_file(open_record_file(output));
  if (digest.records != input.record_count)
    throw Error("sorted output holds " + std::to_string(digest.records) + " records, expected " +
                std::to_string(input.record_count));
  result.output_hash = hex64(digest.multiset_hash);
  result.sorted = digest.key_sorted;
  return result;
}

BatchResult run_batch_experiment(const BatchParams& params, const FreeSpaceFn& free) {
  fs::create_directories(params.work_dir);
  preflight_storage(params.records * kRecordBytes, params.work_dir, free);

  auto input_path = params.work_dir / "input.bin";
  auto output_path = params.work_dir / "output.bin";
  auto tmp = params.work_dir / "tmp";
  auto t0 = MonoClock::now();
  auto input = gen_records(params.records, params.seed, input_path);
  auto datagen_ms = elapsed_ms(t0);
  // storage was checked once for the whole experiment above
  auto result = sort_with_engine(input, output_path, params.memory_limit, tmp, params.engine_label, params.engine_cmd,
                                 [](const fs::path&) { return ~std::uint64_t{0}; });
  result.datagen_time_ms = datagen_ms;
  if (!params.keep_data) {
    std::error_code ec;
    fs::remove(input_path, ec);
    fs::remove(output_path, ec);
    fs::remove_all(tmp, ec);
  }
  return result;
}

}  // namespace benchforge
