#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipro/config.hpp"

namespace dipro {

// Progression label convention shared by the generator, classifier heads and
// metrics: -1 = worsened, 0 = no change, +1 = improved; class indices 0/1/2.
inline int label_to_class(int label) { return label + 1; }
inline int class_to_label(int cls) { return cls - 1; }
int negate_label(int label);  // throws LabelError outside {-1,0,+1}

// One synthetic ICU stay. Flat row-major arrays with explicit dims; the
// hidden_* fields exist only on generator output and in the oracle sidecar,
// never in the model-visible cohort file.
struct Episode {
    std::string patient_id;
    int T = 0, R = 0, K = 0, d_in = 0, N = 0, P = 0, d_s = 0;
    std::vector<double> snapshot_times;  // T, strictly increasing hours
    std::vector<double> region_features; // T * R * d_in
    std::vector<double> ehr_times;       // M+1, strictly increasing hours
    std::vector<double> ehr_series;      // (M+1) * N
    std::vector<double> demographics;    // P
    std::vector<int> progression_labels; // (T-1) * R * K, in {-1,0,+1}
    std::vector<std::uint8_t> label_present;  // same extent
    int mortality_label = 0;             // {0,1}
    int los_class = 0;                   // {0,1,2,3}
    std::vector<double> hidden_static;   // R * d_s
    std::vector<double> hidden_dynamic;  // (T-1) * R * K per-interval drift

    int ehr_rows() const { return static_cast<int>(ehr_times.size()); }
    int pairs() const { return T - 1; }

    const double* region_feature(int t, int r) const {
        return region_features.data() +
               (static_cast<std::size_t>(t) * R + r) * static_cast<std::size_t>(d_in);
    }
    int label(int i, int r, int k) const {
        return progression_labels[(static_cast<std::size_t>(i) * R + r) * K + k];
    }
    bool present(int i, int r, int k) const {
        return label_present[(static_cast<std::size_t>(i) * R + r) * K + k] != 0;
    }
    const double* drift(int i, int r) const {
        return hidden_dynamic.data() +
               (static_cast<std::size_t>(i) * R + r) * static_cast<std::size_t>(K);
    }

    void validate() const;  // invariant checks; throws ContractError
};

// Cohort-level generative state drawn once per (config, seed): mixing
// matrices, outcome weights and LOS thresholds. Rebuilding it from the same
// config is deterministic, so episodes are pure functions of (config, seed).
struct CohortModel {
    std::vector<double> static_mix;   // d_in x d_s
    std::vector<double> dynamic_mix;  // d_in x K
    std::vector<double> ehr_mix;      // N x K
    std::vector<double> mortality_w;  // K, applied to pooled drift
    std::vector<double> mortality_static_w;  // d_s, applied when signal_region is set
    double mortality_bias = 0.0;
    std::vector<double> los_w;        // K
    double los_thresholds[3] = {0, 0, 0};
};

CohortModel build_cohort_model(const CohortConfig& config);

Episode generate_episode(const CohortConfig& config, const CohortModel& model,
                         std::uint64_t episode_seed, int index);

// Full cohort from (config, config.seed); episode i uses a derived seed.
std::vector<Episode> generate_cohort(const CohortConfig& config);

// Drop EHR rows independently with probability `rate`; the first and last
// rows are always retained. Timestamps stay strictly increasing.
Episode inject_missing_ehr(const Episode& episode, double rate, std::uint64_t seed);

// Priors over {worsened, no change, improved} for disease k (skewed clinical
// defaults, cycled beyond the 7 catalogued diseases).
std::array<double, 3> default_label_prior(int k);

}  // namespace dipro
