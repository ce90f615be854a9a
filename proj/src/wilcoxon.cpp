#include "clm/stats/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace clm::stats {

WilcoxonResult wilcoxon_signed_rank_greater(const std::vector<double>& differences) {
    std::vector<double> d;
    d.reserve(differences.size());
    for (double x : differences)
        if (x != 0.0) d.push_back(x);
    if (d.empty()) throw StatsError("all differences are zero");

    const int n = static_cast<int>(d.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });

    // average ranks; ranks doubled so ties stay integral
    std::vector<long> rank2(n);
    double tie_correction = 0;  // sum of t^3 - t over tie groups
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
        long r2 = i + 1 + j;  // 2 * average of ranks i+1 .. j
        for (int k = i; k < j; ++k) rank2[order[k]] = r2;
        double t = j - i;
        tie_correction += t * t * t - t;
        i = j;
    }

    long w2 = 0;
    for (int i = 0; i < n; ++i)
        if (d[i] > 0) w2 += rank2[i];

    WilcoxonResult res;
    res.n_used = n;
    res.w = static_cast<double>(w2) / 2.0;

    if (n <= 20) {
        // Exact: count sign assignments with rank sum >= observed, by DP over
        // the doubled-rank sum distribution.
        long max2 = std::accumulate(rank2.begin(), rank2.end(), 0L);
        std::vector<double> count(static_cast<std::size_t>(max2) + 1, 0.0);
        count[0] = 1.0;
        for (int i = 0; i < n; ++i) {
            for (long s = max2; s >= rank2[i]; --s) count[s] += count[s - rank2[i]];
        }
        double ge = 0;
        for (long s = w2; s <= max2; ++s) ge += count[s];
        res.p_value = ge / std::ldexp(1.0, n);
        res.exact = true;
    } else {
        double mean = n * (n + 1.0) / 4.0;
        double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_correction / 48.0;
        double z = (res.w - mean - 0.5) / std::sqrt(var);  // continuity correction
        res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
        res.exact = false;
    }
    return res;
}

}  // namespace clm::stats
