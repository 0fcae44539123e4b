#include "dipro/temporal.hpp"

#include <cmath>
#include <limits>

#include "dipro/errors.hpp"

namespace dipro {

std::array<double, 3> time_embed_raw(double t_j, double t_i, double t_next) {
    if (!(t_i < t_next)) throw ContractError("time_embed: interval start must precede end");
    const double a = t_j - t_i;
    const double b = t_next - t_j;
    const double ind = 1.0 / (1.0 + std::exp(-(a * b)));
    return {a, b, ind};
}

std::vector<double> interval_attention_bias(std::span<const double> ehr_times, double t_i,
                                            double t_next, bool normalize_halfwidth,
                                            bool* fallback_used) {
    if (ehr_times.empty()) throw ContractError("attention bias: empty timestamp list");
    if (!(t_i < t_next)) throw ContractError("attention bias: interval start must precede end");
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const double mid = (t_i + t_next) / 2.0;
    const double half = (t_next - t_i) / 2.0;
    std::vector<double> bias(ehr_times.size(), -kInf);
    bool any_inside = false;
    for (std::size_t j = 0; j < ehr_times.size(); ++j) {
        const double t = ehr_times[j];
        if (t >= t_i && t <= t_next) {  // closed interval
            double dist = std::abs(t - mid);
            if (normalize_halfwidth) dist /= half;
            bias[j] = -dist;
            any_inside = true;
        }
    }
    if (!any_inside) {
        std::size_t nearest = 0;
        double best = kInf;
        for (std::size_t j = 0; j < ehr_times.size(); ++j) {
            const double dist = std::abs(ehr_times[j] - mid);
            if (dist < best) {
                best = dist;
                nearest = j;
            }
        }
        bias[nearest] = 0.0;
        if (fallback_used) *fallback_used = true;
    }
    return bias;
}

std::vector<double> sinusoidal_positions(std::span<const double> times, int d) {
    std::vector<double> pe(times.size() * static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < times.size(); ++j) {
        for (int i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / d);
            pe[j * d + static_cast<std::size_t>(i)] = std::sin(times[j] * freq);
            if (i + 1 < d) {
                pe[j * d + static_cast<std::size_t>(i) + 1] = std::cos(times[j] * freq);
            }
        }
    }
    return pe;
}

}  // namespace dipro
