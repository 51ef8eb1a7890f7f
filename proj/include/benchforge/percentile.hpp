#pragma once

#include <span>

#include "benchforge/error.hpp"

namespace benchforge {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based),
/// the minimum when p = 0. Throws Error on empty input or p outside [0, 100].
double percentile(std::span<const double> values, double p);

}  // namespace benchforge
