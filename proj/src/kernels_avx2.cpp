// AVX2 lane. Mul and add are issued separately (no FMA) and the reductions
// extract the four vector partials in the same order as the scalar reference,
// so every result is bit-identical to the scalar lane.

#include "dipro/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace dipro::kernels {

namespace {

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    }
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    alignas(32) double s[4];
    _mm256_store_pd(s, acc);
    double total = (s[0] + s[1]) + (s[2] + s[3]);
    for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
    return total;
}

double sum_avx2(const double* a, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    }
    alignas(32) double s[4];
    _mm256_store_pd(s, acc);
    double total = (s[0] + s[1]) + (s[2] + s[3]);
    for (std::size_t i = n4; i < n; ++i) total += a[i];
    return total;
}

const Ops kAvx2Ops = {add_avx2, sub_avx2,  mul_avx2, scale_avx2,
                      axpy_avx2, dot_avx2, sum_avx2, "avx2"};

}  // namespace

const Ops* avx2_table() { return &kAvx2Ops; }

bool cpu_has_avx2() { return __builtin_cpu_supports("avx2"); }

}  // namespace dipro::kernels

#endif
