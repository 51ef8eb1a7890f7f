#include "benchforge/percentile.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "benchforge/error.hpp"

namespace benchforge {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error("percentile of an empty list");
  if (!(p >= 0 && p <= 100)) throw Error("percentile rank must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  const auto n = sorted.size();
  // p * n / 100 rather than p / 100 * n keeps integral ranks exact
  auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

}  // namespace benchforge
