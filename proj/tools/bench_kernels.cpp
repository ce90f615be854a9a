// Benchmark of the OpenMP matmul kernels against the serial reference, with a
// bit-exactness check on every shape.
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "clm/lm/kernels.hpp"

using namespace clm::lm;

namespace {

double bench(void (*fn)(float*, const float*, const float*, std::size_t, std::size_t, std::size_t,
                        bool),
             float* c, const float* a, const float* b, std::size_t m, std::size_t k,
             std::size_t n) {
    fn(c, a, b, m, k, n, false);  // warm up
    int reps = 1;
    double elapsed = 0;
    for (;;) {
        auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) fn(c, a, b, m, k, n, false);
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (elapsed > 0.2) break;
        reps *= 4;
    }
    return elapsed / reps;
}

}  // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-8s %-18s %12s %12s %8s %8s\n", "kernel", "shape", "serial_ms", "omp_ms",
                "speedup", "exact");

    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);

    struct Shape {
        std::size_t m, k, n;
    };
    for (Shape s : {Shape{128, 128, 280}, {512, 64, 512}, {1024, 256, 256}, {256, 1024, 1024}}) {
        std::vector<float> a(s.m * s.k), b(s.k * s.n), c1(s.m * s.n), c2(s.m * s.n);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = u(rng);

        double ts = bench(&serial::matmul_nn<float>, c1.data(), a.data(), b.data(), s.m, s.k, s.n);
        double tp = bench(&matmul_nn<float>, c2.data(), a.data(), b.data(), s.m, s.k, s.n);
        bool exact = c1 == c2;
        char shape[32];
        std::snprintf(shape, sizeof(shape), "%zux%zux%zu", s.m, s.k, s.n);
        std::printf("%-8s %-18s %12.3f %12.3f %8.2f %8s\n", "nn", shape, ts * 1e3, tp * 1e3,
                    ts / tp, exact ? "yes" : "NO");
        if (!exact) return 1;

        std::vector<float> bt(s.n * s.k);
        for (std::size_t p = 0; p < s.k; ++p)
            for (std::size_t j = 0; j < s.n; ++j) bt[j * s.k + p] = b[p * s.n + j];
        ts = bench(&serial::matmul_nt<float>, c1.data(), a.data(), bt.data(), s.m, s.k, s.n);
        tp = bench(&matmul_nt<float>, c2.data(), a.data(), bt.data(), s.m, s.k, s.n);
        exact = c1 == c2;
        std::printf("%-8s %-18s %12.3f %12.3f %8.2f %8s\n", "nt", shape, ts * 1e3, tp * 1e3,
                    ts / tp, exact ? "yes" : "NO");
        if (!exact) return 1;

        std::vector<float> at(s.k * s.m);
        for (std::size_t i = 0; i < s.m; ++i)
            for (std::size_t p = 0; p < s.k; ++p) at[p * s.m + i] = a[i * s.k + p];
        ts = bench(&serial::matmul_tn<float>, c1.data(), at.data(), b.data(), s.m, s.k, s.n);
        tp = bench(&matmul_tn<float>, c2.data(), at.data(), b.data(), s.m, s.k, s.n);
        exact = c1 == c2;
        std::printf("%-8s %-18s %12.3f %12.3f %8.2f %8s\n", "tn", shape, ts * 1e3, tp * 1e3,
                    ts / tp, exact ? "yes" : "NO");
        if (!exact) return 1;
    }
    return 0;
}
