#pragma once

#include <cstddef>
#include <cstdint>

namespace clm::lm {

// Row-major matrix products used by the model. Every kernel walks the
// reduction axis in the same fixed order, and the parallel variants split
// work over independent output rows only, so results are bit-identical to
// the serial reference at any thread count.
//
//   nn: C[M,N] (+)= A[M,K] * B[K,N]
//   nt: C[M,N] (+)= A[M,K] * B[N,K]^T
//   tn: C[M,N] (+)= A[K,M]^T * B[K,N]

namespace serial {

template <typename Float>
void matmul_nn(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
    for (std::size_t i = 0; i < m; ++i) {
        Float* ci = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) ci[j] = Float(0);
        for (std::size_t p = 0; p < k; ++p) {
            Float aip = a[i * k + p];
            const Float* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// Dot product with 8 fixed accumulator lanes. The lane layout never depends
// on thread count, so results are reproducible while still vectorizing.
template <typename Float>
Float dot_lanes(const Float* x, const Float* y, std::size_t k) {
    Float acc[8] = {};
    std::size_t k8 = k - k % 8;
    for (std::size_t p = 0; p < k8; p += 8)
        for (std::size_t l = 0; l < 8; ++l) acc[l] += x[p + l] * y[p + l];
    for (std::size_t p = k8; p < k; ++p) acc[p - k8] += x[p] * y[p];
    Float s01 = acc[0] + acc[1], s23 = acc[2] + acc[3];
    Float s45 = acc[4] + acc[5], s67 = acc[6] + acc[7];
    return (s01 + s23) + (s45 + s67);
}

template <typename Float>
void matmul_nt(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
    for (std::size_t i = 0; i < m; ++i) {
        const Float* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            Float s = dot_lanes(ai, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

template <typename Float>
void matmul_tn(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
    for (std::size_t i = 0; i < m; ++i) {
        Float* ci = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) ci[j] = Float(0);
        for (std::size_t p = 0; p < k; ++p) {
            Float api = a[p * m + i];
            const Float* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

}  // namespace serial

using serial::dot_lanes;

template <typename Float>
void matmul_nn(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
        serial::matmul_nn(c + i * n, a + i * k, b, 1, k, n, accumulate);
}

template <typename Float>
void matmul_nt(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
        serial::matmul_nt(c + i * n, a + i * k, b, 1, k, n, accumulate);
}

template <typename Float>
void matmul_tn(Float* c, const Float* a, const Float* b, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate = false) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
        Float* ci = c + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) ci[j] = Float(0);
        for (std::size_t p = 0; p < k; ++p) {
            Float api = a[p * m + i];
            const Float* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

}  // namespace clm::lm
