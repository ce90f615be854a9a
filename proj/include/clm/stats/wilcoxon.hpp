#pragma once

#include <stdexcept>
#include <vector>

namespace clm::stats {

struct StatsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct WilcoxonResult {
    double w = 0;        // sum of ranks of positive differences
    double p_value = 1;  // one-sided, alternative: median > 0
    int n_used = 0;      // differences remaining after dropping zeros
    bool exact = false;  // exact enumeration (n <= 20) vs normal approximation
};

// One-sided Wilcoxon signed-rank test (H1: median > 0).
// Zeros are dropped; |d| ranked with average ranks for ties. Exact p by
// enumeration of sign assignments (conditional on the observed ranks) for
// n <= 20, otherwise normal approximation with tie-corrected variance and
// continuity correction. Throws StatsError when all differences are zero.
WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& differences);

}  // namespace clm::stats
