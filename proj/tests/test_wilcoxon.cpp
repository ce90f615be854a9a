#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "clm/stats/wilcoxon.hpp"

using clm::stats::wilcoxon_signed_rank_greater;
using clm::stats::StatsError;

namespace {

// Independent oracle: brute-force enumeration over all sign assignments.
double brute_p_greater(const std::vector<double>& diffs) {
    std::vector<double> d;
    for (double x : diffs)
        if (x != 0.0) d.push_back(std::abs(x));
    int n = static_cast<int>(d.size());
    std::vector<double> rank(n);
    for (int i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (int j = 0; j < n; ++j) {
            if (d[j] < d[i]) ++less;
            if (d[j] == d[i]) ++equal;
        }
        rank[i] = less + (equal + 1) / 2.0;
    }
    double w_obs = 0;
    {
        int i = 0;
        for (double x : diffs) {
            if (x == 0.0) continue;
            if (x > 0) w_obs += rank[i];
            ++i;
        }
    }
    long ge = 0;
    for (long mask = 0; mask < (1L << n); ++mask) {
        double w = 0;
        for (int i = 0; i < n; ++i)
            if (mask & (1L << i)) w += rank[i];
        if (w >= w_obs - 1e-12) ++ge;
    }
    return static_cast<double>(ge) / static_cast<double>(1L << n);
}

}  // namespace

TEST_CASE("hand-enumerated exact cases") {
    auto r = wilcoxon_signed_rank_greater({1, 2, 3});
    CHECK(r.w == 6);
    CHECK(r.p_value == doctest::Approx(0.125));
    CHECK(r.exact);

    r = wilcoxon_signed_rank_greater({-1, -2, -3});
    CHECK(r.w == 0);
    CHECK(r.p_value == doctest::Approx(1.0));

    r = wilcoxon_signed_rank_greater({1, -2, 3});
    CHECK(r.w == 4);
    CHECK(r.p_value == doctest::Approx(0.375));
}

TEST_CASE("exact branch matches brute force on all sign patterns, n <= 8") {
    for (int n = 1; n <= 8; ++n) {
        for (int signs = 0; signs < (1 << n); ++signs) {
            std::vector<double> d(n);
            for (int i = 0; i < n; ++i) d[i] = (signs & (1 << i)) ? (i + 1.0) : -(i + 1.0);
            auto r = wilcoxon_signed_rank_greater(d);
            CHECK(r.p_value == doctest::Approx(brute_p_greater(d)).epsilon(1e-12));
        }
    }
}

TEST_CASE("ties handled with average ranks") {
    // |d| = {5,1,1,1}: ranks 4,2,2,2; W = 4+2+2 = 8; P(W>=8) = 4/16
    auto r = wilcoxon_signed_rank_greater({5, 1, 1, -1});
    CHECK(r.w == 8);
    CHECK(r.p_value == doctest::Approx(brute_p_greater({5, 1, 1, -1})));
}

TEST_CASE("zeros dropped; all-zero input rejected") {
    auto r = wilcoxon_signed_rank_greater({0, 1, 2, 0, 3});
    CHECK(r.n_used == 3);
    CHECK(r.p_value == doctest::Approx(0.125));
    CHECK_THROWS_AS(wilcoxon_signed_rank_greater({0, 0}), StatsError);
}

TEST_CASE("exact and normal approximation agree for n in [15,20]") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.3, 1.0);
    std::uniform_int_distribution<int> nn(15, 20);
    for (int trial = 0; trial < 100; ++trial) {
        int n = nn(rng);
        std::vector<double> d(n);
        for (auto& x : d) x = g(rng);
        auto exact = wilcoxon_signed_rank_greater(d);
        REQUIRE(exact.exact);
        // push the same data through the approximation branch by replication
        // of the formula path: temporarily extend with a far-out pair that is
        // removed from both sides is fragile, so compare against brute force
        // and against the approximation computed on the identical ranks.
        double mean = n * (n + 1.0) / 4.0;
        double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
        double z = (exact.w - mean - 0.5) / std::sqrt(var);
        double p_norm = 0.5 * std::erfc(z / std::sqrt(2.0));
        CHECK(std::abs(exact.p_value - p_norm) <= 0.01);
    }
}

TEST_CASE("large positively-shifted sample matches reference implementation") {
    // d_i = sin(i)*2 + 0.5, i = 1..1000; reference (scipy.stats.wilcoxon,
    // alternative='greater', correction=True, approx): W = 346423,
    // p = 3.234e-26.
    std::vector<double> d(1000);
    for (int i = 1; i <= 1000; ++i) d[i - 1] = std::sin(static_cast<double>(i)) * 2.0 + 0.5;
    auto r = wilcoxon_signed_rank_greater(d);
    CHECK(!r.exact);
    CHECK(r.w == 346423.0);
    CHECK(r.p_value < 1e-10);
    CHECK(std::abs(std::log10(r.p_value) - std::log10(3.2340101721590575e-26)) < 0.01);
}
