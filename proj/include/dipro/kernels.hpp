#pragma once

#include <cstddef>
#include <vector>

namespace dipro::kernels {

// All tensor arithmetic funnels through one of these tables. Every lane must
// produce bit-identical results: elementwise ops share the same per-element
// IEEE operations (no FMA), and reductions share one fixed accumulation order
// (four striped partial sums combined as (s0+s1)+(s2+s3), then the tail
// elements added one by one). The scalar lane is the reference definition.
struct Ops {
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    void (*sub)(const double* a, const double* b, double* out, std::size_t n);
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    void (*scale)(const double* a, double s, double* out, std::size_t n);
    void (*axpy)(double a, const double* x, double* y, std::size_t n);  // y += a*x
    double (*dot)(const double* a, const double* b, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    const char* name;
};

enum class Lane { kScalar, kAvx2, kNeon };

// Lanes usable on this machine (scalar always first).
std::vector<Lane> available_lanes();

const Ops& table_for(Lane lane);

// Active table. First call honors DIPRO_KERNEL_LANE=scalar|avx2|neon|auto,
// defaulting to the widest available lane.
const Ops& active();
Lane active_lane();

// Override dispatch (tests, CLI flag). Throws ContractError if unavailable.
void force_lane(Lane lane);

const char* lane_name(Lane lane);

}  // namespace dipro::kernels
