#pragma once

#include <array>
#include <span>
#include <vector>

namespace dipro {

// Raw time-embedding features of EHR timestamp t_j relative to the snapshot
// interval [t_i, t_next]: elapsed, remaining, and a sigmoid soft indicator of
// membership. The third feature is exactly 0.5 at the interval endpoints.
std::array<double, 3> time_embed_raw(double t_j, double t_i, double t_next);

// Center-focused additive attention bias per EHR timestamp: -|t_j - midpoint|
// inside the closed interval, -inf outside. When no timestamp falls inside,
// the single nearest timestamp is unmasked with bias 0 so the attention row
// stays well defined (fallback_used reports this). normalize_halfwidth divides
// the in-interval distances by the interval half-width.
std::vector<double> interval_attention_bias(std::span<const double> ehr_times, double t_i,
                                            double t_next, bool normalize_halfwidth = false,
                                            bool* fallback_used = nullptr);

// Sinusoidal position signal for absolute-hour timestamps, one row per stamp.
std::vector<double> sinusoidal_positions(std::span<const double> times, int d);

}  // namespace dipro
