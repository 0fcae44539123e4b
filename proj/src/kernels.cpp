#include "dipro/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

#include "dipro/errors.hpp"

namespace dipro::kernels {

namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

// Canonical reduction order shared with the vector lanes.
double dot_scalar(const double* a, const double* b, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t i = 0; i < n4; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double total = (s0 + s1) + (s2 + s3);
    for (std::size_t i = n4; i < n; ++i) total += a[i] * b[i];
    return total;
}

double sum_scalar(const double* a, std::size_t n) {
    const std::size_t n4 = n & ~std::size_t{3};
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (std::size_t i = 0; i < n4; i += 4) {
        s0 += a[i];
        s1 += a[i + 1];
        s2 += a[i + 2];
        s3 += a[i + 3];
    }
    double total = (s0 + s1) + (s2 + s3);
    for (std::size_t i = n4; i < n; ++i) total += a[i];
    return total;
}

const Ops kScalarOps = {add_scalar, sub_scalar,  mul_scalar, scale_scalar,
                        axpy_scalar, dot_scalar, sum_scalar, "scalar"};

}  // namespace

#if DIPRO_HAVE_AVX2
const Ops* avx2_table();  // kernels_avx2.cpp
bool cpu_has_avx2();
#endif
#if DIPRO_HAVE_NEON
const Ops* neon_table();  // kernels_neon.cpp
#endif

std::vector<Lane> available_lanes() {
    std::vector<Lane> lanes{Lane::kScalar};
#if DIPRO_HAVE_AVX2
    if (cpu_has_avx2()) lanes.push_back(Lane::kAvx2);
#endif
#if DIPRO_HAVE_NEON
    lanes.push_back(Lane::kNeon);
#endif
    return lanes;
}

const Ops& table_for(Lane lane) {
    switch (lane) {
        case Lane::kScalar:
            return kScalarOps;
#if DIPRO_HAVE_AVX2
        case Lane::kAvx2:
            if (cpu_has_avx2()) return *avx2_table();
            break;
#endif
#if DIPRO_HAVE_NEON
        case Lane::kNeon:
            return *neon_table();
#endif
        default:
            break;
    }
    throw ContractError(std::string("kernel lane unavailable: ") + lane_name(lane));
}

namespace {

const Ops* g_active = nullptr;
Lane g_active_lane = Lane::kScalar;

void select_initial() {
    Lane lane = Lane::kScalar;
    const char* env = std::getenv("DIPRO_KERNEL_LANE");
    std::string want = env ? env : "auto";
    if (want == "scalar") {
        lane = Lane::kScalar;
    } else if (want == "avx2" || want == "neon") {
        for (Lane l : available_lanes()) {
            if (std::string(lane_name(l)) == want) lane = l;
        }
        if (std::string(lane_name(lane)) != want) {
            throw ContractError("DIPRO_KERNEL_LANE requests unavailable lane: " + want);
        }
    } else {
        // auto: widest available
        auto lanes = available_lanes();
        lane = lanes.back();
    }
    g_active = &table_for(lane);
    g_active_lane = lane;
}

}  // namespace

const Ops& active() {
    if (!g_active) select_initial();
    return *g_active;
}

Lane active_lane() {
    if (!g_active) select_initial();
    return g_active_lane;
}

void force_lane(Lane lane) {
    g_active = &table_for(lane);
    g_active_lane = lane;
}

const char* lane_name(Lane lane) {
    switch (lane) {
        case Lane::kScalar: return "scalar";
        case Lane::kAvx2: return "avx2";
        case Lane::kNeon: return "neon";
    }
    return "?";
}

}  // namespace dipro::kernels
