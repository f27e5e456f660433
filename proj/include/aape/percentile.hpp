#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "error.hpp"

namespace aape {

// Nearest-rank percentile: the ceil(q/100 * M)-th smallest value (1-based),
// with q in (0, 100]. Callers that filter against the returned value with
// <= or >= include every tie at the boundary.
inline double nearest_rank_percentile(std::span<const double> values, double q) {
    if (values.empty()) throw Error("percentile of empty set");
    if (!(q > 0.0 && q <= 100.0)) throw Error("percentile out of range (0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    const auto m = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(m) / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, m);
    std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
    return sorted[rank - 1];
}

}  // namespace aape
