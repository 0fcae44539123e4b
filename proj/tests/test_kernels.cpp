#include <doctest.h>

#include <cstring>
#include <vector>

#include "dipro/kernels.hpp"
#include "dipro/rng.hpp"

using namespace dipro;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * 3.0;
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("every available lane is bit-identical to the scalar reference") {
    const auto& ref = kernels::table_for(kernels::Lane::kScalar);
    Rng rng(20240601);
    // Odd sizes exercise the remainder loops.
    for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{5},
                          std::size_t{7}, std::size_t{8}, std::size_t{15}, std::size_t{64},
                          std::size_t{257}, std::size_t{1000}}) {
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        const double s = rng.normal();
        for (auto lane : kernels::available_lanes()) {
            const auto& ops = kernels::table_for(lane);
            INFO("lane=", ops.name, " n=", n);

            std::vector<double> out_ref(n), out(n);
            ref.add(a.data(), b.data(), out_ref.data(), n);
            ops.add(a.data(), b.data(), out.data(), n);
            CHECK(bit_equal(out_ref, out));

            ref.sub(a.data(), b.data(), out_ref.data(), n);
            ops.sub(a.data(), b.data(), out.data(), n);
            CHECK(bit_equal(out_ref, out));

            ref.mul(a.data(), b.data(), out_ref.data(), n);
            ops.mul(a.data(), b.data(), out.data(), n);
            CHECK(bit_equal(out_ref, out));

            ref.scale(a.data(), s, out_ref.data(), n);
            ops.scale(a.data(), s, out.data(), n);
            CHECK(bit_equal(out_ref, out));

            out_ref = b;
            out = b;
            ref.axpy(s, a.data(), out_ref.data(), n);
            ops.axpy(s, a.data(), out.data(), n);
            CHECK(bit_equal(out_ref, out));

            CHECK(ref.dot(a.data(), b.data(), n) == ops.dot(a.data(), b.data(), n));
            CHECK(ref.sum(a.data(), n) == ops.sum(a.data(), n));
        }
    }
}

TEST_CASE("dot and sum agree with a high-precision oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.index(300);
        auto a = random_vec(n, rng);
        auto b = random_vec(n, rng);
        long double dot_ld = 0.0L, sum_ld = 0.0L;
        for (std::size_t i = 0; i < n; ++i) {
            dot_ld += static_cast<long double>(a[i]) * b[i];
            sum_ld += a[i];
        }
        const auto& ops = kernels::active();
        CHECK(ops.dot(a.data(), b.data(), n) ==
              doctest::Approx(static_cast<double>(dot_ld)).epsilon(1e-12));
        CHECK(ops.sum(a.data(), n) ==
              doctest::Approx(static_cast<double>(sum_ld)).epsilon(1e-12));
    }
}

TEST_CASE("lane dispatch is forceable and reports a name") {
    const auto lanes = kernels::available_lanes();
    CHECK(lanes.front() == kernels::Lane::kScalar);
    for (auto lane : lanes) {
        kernels::force_lane(lane);
        CHECK(kernels::active_lane() == lane);
        CHECK(kernels::active().name == doctest::String(kernels::lane_name(lane)));
    }
    kernels::force_lane(lanes.back());
}

}  // TEST_SUITE
