// NEON lane (aarch64, f64x2). Two vector accumulators give the same four
// striped partials as the scalar reference, combined in the same order, so
// results stay bit-identical across lanes.

#include "dipro/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace dipro::kernels {

namespace {

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_neon(const double* a, double s, double* out, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vs));
    }
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_neon(const double* a, const double* b, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    float64x2_t acc01 = vdupq_n_f64(0.0);
    float64x2_t acc23 = vdupq_n_f64(0.0);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
        acc23 = vaddq_f64(acc23, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    }
    const double s0 = vgetq_lane_f64(acc01, 0), s1 = vgetq_lane_f64(acc01, 1);
    const double s2 = vgetq_lane_f64(acc23, 0), s3 = vgetq_lane_f64(acc23, 1);
    double total = (s0 + s1) + (s2 + s3);
    for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
    return total;
}

double sum_neon(const double* a, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    float64x2_t acc01 = vdupq_n_f64(0.0);
    float64x2_t acc23 = vdupq_n_f64(0.0);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc01 = vaddq_f64(acc01, vld1q_f64(a + i));
        acc23 = vaddq_f64(acc23, vld1q_f64(a + i + 2));
    }
    const double s0 = vgetq_lane_f64(acc01, 0), s1 = vgetq_lane_f64(acc01, 1);
    const double s2 = vgetq_lane_f64(acc23, 0), s3 = vgetq_lane_f64(acc23, 1);
    double total = (s0 + s1) + (s2 + s3);
    for (std::size_t i = n4; i < n; ++i) total += a[i];
    return total;
}

const Ops kNeonOps = {add_neon, sub_neon,  mul_neon, scale_neon,
                      axpy_neon, dot_neon, sum_neon, "neon"};

}  // namespace

const Ops* neon_table() { return &kNeonOps; }

}  // namespace dipro::kernels

#endif
