#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "benchforge/error.hpp"
#include "benchforge/run_record.hpp"

namespace benchforge {

enum class Dimension { input_size, event_rate };

std::string_view dimension_name(Dimension d) noexcept;
std::optional<Dimension> dimension_from_name(std::string_view s) noexcept;

/// Engine label -> (x, y) points sorted by x. Every series shares one x grid.
struct ComparisonTable {
  Dimension dimension = Dimension::input_size;
  std::string x_unit;
  std::string y_unit;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> warnings;  // not serialized

  bool empty() const noexcept { return series.empty(); }
  std::size_t point_count() const noexcept;
  bool operator==(const ComparisonTable& o) const {
    return dimension == o.dimension && x_unit == o.x_unit && y_unit == o.y_unit && series == o.series;
  }
};

class ReportError : public Error {
 public:
  using Error::Error;
};

/// x = input bytes, y = execution time in ms, one series per engine label.
/// Runs with the same engine and x are averaged. Points off the shared x
/// grid are dropped with a warning.
ComparisonTable build_batch_comparison(std::span<const RunRecord> runs);

/// x = event rate, y = percentile(p) of the pooled window latencies of each
/// run. Runs with no latencies are omitted with a warning.
ComparisonTable build_stream_comparison(std::span<const RunRecord> runs, double p);

enum class WorkloadKind { batch, stream };

/// The single workload kind all runs carry; throws ReportError naming the
/// mismatch otherwise.
WorkloadKind common_workload_kind(std::span<const RunRecord> runs);

struct RatioRow {
  std::string engine;
  std::string baseline;
  double x = 0;
  double ratio = 0;  // engine y / baseline y
};

/// Ratios of every series against the first series (label order) at each
/// shared x where the baseline y is nonzero.
std::vector<RatioRow> comparison_ratios(const ComparisonTable& table);

std::string comparison_csv(const ComparisonTable& table);
ComparisonTable parse_comparison_csv(std::string_view csv);
std::string comparison_svg(const ComparisonTable& table);
std::string ratios_csv(const std::vector<RatioRow>& rows);

/// Writes comparison.csv and comparison.svg (plus ratios.csv with two or more
/// series). Returns the written paths.
std::vector<std::filesystem::path> render(const ComparisonTable& table, const std::filesystem::path& out);

}  // namespace benchforge
