#include "dipro/episode.hpp"

#include <algorithm>
#include <cmath>

#include "dipro/errors.hpp"
#include "dipro/rng.hpp"

namespace dipro {

int negate_label(int label) {
    if (label < -1 || label > 1) {
        throw LabelError("progression label must be in {-1,0,+1}, got " + std::to_string(label));
    }
    return -label;
}

void Episode::validate() const {
    if (T < 2) throw ContractError("episode: T must be >= 2");
    if (static_cast<int>(snapshot_times.size()) != T) throw ContractError("episode: bad T");
    for (int i = 1; i < T; ++i) {
        if (!(snapshot_times[i] > snapshot_times[i - 1])) {
            throw ContractError("episode: snapshot times must be strictly increasing");
        }
    }
    for (std::size_t j = 1; j < ehr_times.size(); ++j) {
        if (!(ehr_times[j] > ehr_times[j - 1])) {
            throw ContractError("episode: EHR timestamps must be strictly increasing");
        }
    }
    if (region_features.size() !=
        static_cast<std::size_t>(T) * R * static_cast<std::size_t>(d_in)) {
        throw ContractError("episode: region feature extent mismatch");
    }
    if (ehr_series.size() != ehr_times.size() * static_cast<std::size_t>(N)) {
        throw ContractError("episode: EHR extent mismatch");
    }
    if (progression_labels.size() != static_cast<std::size_t>(T - 1) * R * static_cast<std::size_t>(K) ||
        label_present.size() != progression_labels.size()) {
        throw ContractError("episode: label extent mismatch");
    }
    for (int v : progression_labels) {
        if (v < -1 || v > 1) throw ContractError("episode: label outside {-1,0,+1}");
    }
    if (mortality_label != 0 && mortality_label != 1) {
        throw ContractError("episode: mortality label must be 0/1");
    }
    if (los_class < 0 || los_class > 3) throw ContractError("episode: los class must be 0..3");
}

std::array<double, 3> default_label_prior(int k) {
    // {worsened, no change, improved} marginals for the seven catalogued
    // diseases; heavy no-change mass stresses macro metrics.
    static const std::array<double, 3> table[7] = {
        {0.314, 0.533, 0.153},  // atelectasis
        {0.078, 0.875, 0.046},  // enlarged cardiac silhouette
        {0.327, 0.531, 0.142},  // consolidation
        {0.333, 0.348, 0.319},  // pulmonary edema
        {0.312, 0.496, 0.192},  // lung opacity
        {0.289, 0.580, 0.131},  // pleural effusion
        {0.501, 0.372, 0.127},  // pneumonia
    };
    return table[k % 7];
}

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> gaussian_matrix(int rows, int cols, double scl, Rng& rng) {
    std::vector<double> m(static_cast<std::size_t>(rows) * cols);
    for (auto& v : m) v = rng.normal() * scl;
    return m;
}

// Per-interval drift vector for one (region, disease) assignment. Zero-label
// channels stay exactly zero so label sign always matches drift sign.
std::vector<double> draw_drift(const std::vector<int>& delta, double drift_scale, Rng& rng) {
    std::vector<double> y(delta.size());
    for (std::size_t k = 0; k < delta.size(); ++k) {
        if (delta[k] == 0) {
            y[k] = 0.0;
        } else {
            y[k] = delta[k] * drift_scale * (0.6 + 0.4 * std::abs(rng.normal()));
        }
    }
    return y;
}

struct ScoreSample {
    double mortality_risk_raw;  // before bias
    double los_score;
};

// Simulate the parts of the episode pipeline that feed the outcome scores,
// using the same distributions as generate_episode. Used once per cohort to
// calibrate the mortality bias and LOS quantile thresholds.
ScoreSample sample_scores(const CohortConfig& cfg, const CohortModel& model, Rng& rng) {
    const int T = 2 + static_cast<int>(rng.discrete(
                          {cfg.t_probs[0], cfg.t_probs[1], cfg.t_probs[2], cfg.t_probs[3]}));
    std::vector<double> pooled(static_cast<std::size_t>(cfg.K), 0.0);
    std::vector<double> sig_static(static_cast<std::size_t>(cfg.d_s), 0.0);
    const bool planted = cfg.signal_region >= 0;
    for (int r = 0; r < cfg.R; ++r) {
        std::vector<double> s(static_cast<std::size_t>(cfg.d_s));
        for (auto& v : s) v = rng.normal() * cfg.static_scale;
        if (planted && r == cfg.signal_region) sig_static = s;
        std::vector<int> delta(static_cast<std::size_t>(cfg.K));
        for (int k = 0; k < cfg.K; ++k) {
            auto prior = cfg.label_priors.empty() ? default_label_prior(k)
                                                  : cfg.label_priors[static_cast<std::size_t>(k)];
            std::size_t cls = rng.discrete({prior[0], prior[1], prior[2]});
            delta[static_cast<std::size_t>(k)] = static_cast<int>(cls) - 1;
        }
        std::vector<double> mean_drift(static_cast<std::size_t>(cfg.K), 0.0);
        for (int i = 0; i < T - 1; ++i) {
            auto y = draw_drift(delta, cfg.drift_scale, rng);
            for (int k = 0; k < cfg.K; ++k) mean_drift[static_cast<std::size_t>(k)] += y[static_cast<std::size_t>(k)] / (T - 1);
        }
        const bool pool_this = !planted || r == cfg.signal_region;
        if (pool_this) {
            const double w = planted ? 1.0 : 1.0 / cfg.R;
            for (int k = 0; k < cfg.K; ++k) pooled[static_cast<std::size_t>(k)] += w * mean_drift[static_cast<std::size_t>(k)];
        }
    }
    double risk = 0.0, los = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        risk += model.mortality_w[static_cast<std::size_t>(k)] * pooled[static_cast<std::size_t>(k)];
        los += model.los_w[static_cast<std::size_t>(k)] * pooled[static_cast<std::size_t>(k)];
    }
    if (planted) {
        for (int j = 0; j < cfg.d_s; ++j) {
            risk += model.mortality_static_w[static_cast<std::size_t>(j)] * sig_static[static_cast<std::size_t>(j)];
        }
    }
    los += 0.25 * rng.normal();
    return {risk, los};
}

}  // namespace

CohortModel build_cohort_model(const CohortConfig& config) {
    config.validate();
    Rng rng(Rng::derive(config.seed, 0xC0110171));
    CohortModel model;
    model.static_mix = gaussian_matrix(config.d_in, config.d_s, 1.0, rng);
    model.dynamic_mix = gaussian_matrix(config.d_in, config.K, 1.0, rng);
    model.ehr_mix = gaussian_matrix(config.N, config.K, 1.0, rng);
    model.mortality_w = gaussian_matrix(config.K, 1, 1.2, rng);
    model.mortality_static_w = gaussian_matrix(config.d_s, 1, 0.35, rng);
    model.los_w = gaussian_matrix(config.K, 1, 1.0, rng);

    // Calibrate the mortality bias toward ~17% prevalence and the LOS
    // thresholds toward the 29.2/23.6/25.3/22.0 class split.
    Rng calib(Rng::derive(config.seed, 0xCA11B));
    const int n = 1024;
    std::vector<double> risks(n), los_scores(n);
    for (int i = 0; i < n; ++i) {
        auto s = sample_scores(config, model, calib);
        risks[static_cast<std::size_t>(i)] = s.mortality_risk_raw;
        los_scores[static_cast<std::size_t>(i)] = s.los_score;
    }
    std::sort(risks.begin(), risks.end());
    const double target_prev = 0.171;
    // risk at the (1 - prevalence) quantile maps to logit 0
    model.mortality_bias = -risks[static_cast<std::size_t>((1.0 - target_prev) * (n - 1))];
    std::sort(los_scores.begin(), los_scores.end());
    const double cuts[3] = {0.292, 0.292 + 0.236, 0.292 + 0.236 + 0.253};
    for (int c = 0; c < 3; ++c) {
        model.los_thresholds[c] = los_scores[static_cast<std::size_t>(cuts[c] * (n - 1))];
    }
    return model;
}

Episode generate_episode(const CohortConfig& cfg, const CohortModel& model,
                         std::uint64_t episode_seed, int index) {
    Rng rng(episode_seed);
    Episode ep;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p%06d", index);
    ep.patient_id = buf;
    ep.R = cfg.R;
    ep.K = cfg.K;
    ep.d_in = cfg.d_in;
    ep.N = cfg.N;
    ep.P = cfg.P;
    ep.d_s = cfg.d_s;

    ep.T = 2 + static_cast<int>(rng.discrete(
                   {cfg.t_probs[0], cfg.t_probs[1], cfg.t_probs[2], cfg.t_probs[3]}));

    // Snapshots jittered inside equal segments of the stay: strictly
    // increasing with a guaranteed minimum gap of half a segment.
    const double t_lo = 0.1 * cfg.duration_hours;
    const double t_hi = 0.9 * cfg.duration_hours;
    const double seg = (t_hi - t_lo) / ep.T;
    ep.snapshot_times.resize(static_cast<std::size_t>(ep.T));
    for (int i = 0; i < ep.T; ++i) {
        ep.snapshot_times[static_cast<std::size_t>(i)] =
            t_lo + (i + 0.25 + 0.5 * rng.uniform01()) * seg;
    }

    const int M = static_cast<int>(std::floor(cfg.duration_hours / cfg.ehr_interval_hours));
    ep.ehr_times.resize(static_cast<std::size_t>(M + 1));
    for (int j = 0; j <= M; ++j) ep.ehr_times[static_cast<std::size_t>(j)] = j * cfg.ehr_interval_hours;

    // Hidden factors: per-region static latent, per (region,disease) direction
    // delta, per-interval drift increments with sign(delta) preserved exactly.
    ep.hidden_static.resize(static_cast<std::size_t>(cfg.R) * cfg.d_s);
    for (auto& v : ep.hidden_static) v = rng.normal() * cfg.static_scale;

    const int pairs = ep.T - 1;
    std::vector<int> delta(static_cast<std::size_t>(cfg.R) * cfg.K);
    for (int r = 0; r < cfg.R; ++r) {
        for (int k = 0; k < cfg.K; ++k) {
            auto prior = cfg.label_priors.empty() ? default_label_prior(k)
                                                  : cfg.label_priors[static_cast<std::size_t>(k)];
            std::size_t cls = rng.discrete({prior[0], prior[1], prior[2]});
            delta[static_cast<std::size_t>(r) * cfg.K + k] = static_cast<int>(cls) - 1;
        }
    }
    ep.hidden_dynamic.assign(static_cast<std::size_t>(pairs) * cfg.R * cfg.K, 0.0);
    for (int i = 0; i < pairs; ++i) {
        for (int r = 0; r < cfg.R; ++r) {
            std::vector<int> d(delta.begin() + static_cast<long>(r) * cfg.K,
                               delta.begin() + static_cast<long>(r + 1) * cfg.K);
            auto y = draw_drift(d, cfg.drift_scale, rng);
            std::copy(y.begin(), y.end(),
                      ep.hidden_dynamic.begin() + (static_cast<long>(i) * cfg.R + r) * cfg.K);
        }
    }

    // Dynamic state at snapshot i: cumulative drift, zero at the first snapshot.
    auto state_at_snapshot = [&](int i, int r, int k) {
        double z = 0.0;
        for (int q = 0; q < i; ++q) {
            z += ep.hidden_dynamic[(static_cast<std::size_t>(q) * cfg.R + r) * cfg.K + k];
        }
        return z;
    };
    // Piecewise-linear interpolation of the dynamic state at hour t.
    auto state_at_time = [&](double t, int r, int k) {
        if (t <= ep.snapshot_times.front()) return state_at_snapshot(0, r, k);
        if (t >= ep.snapshot_times.back()) return state_at_snapshot(ep.T - 1, r, k);
        int i = 0;
        while (ep.snapshot_times[static_cast<std::size_t>(i + 1)] < t) ++i;
        const double t0 = ep.snapshot_times[static_cast<std::size_t>(i)];
        const double t1 = ep.snapshot_times[static_cast<std::size_t>(i + 1)];
        const double a = (t - t0) / (t1 - t0);
        return (1.0 - a) * state_at_snapshot(i, r, k) + a * state_at_snapshot(i + 1, r, k);
    };

    // Region features: static mix + dynamic mix + noise.
    ep.region_features.assign(static_cast<std::size_t>(ep.T) * cfg.R * cfg.d_in, 0.0);
    for (int t = 0; t < ep.T; ++t) {
        for (int r = 0; r < cfg.R; ++r) {
            double* f = ep.region_features.data() +
                        (static_cast<std::size_t>(t) * cfg.R + r) * cfg.d_in;
            for (int a = 0; a < cfg.d_in; ++a) {
                double v = 0.0;
                for (int j = 0; j < cfg.d_s; ++j) {
                    v += model.static_mix[static_cast<std::size_t>(a) * cfg.d_s + j] *
                         ep.hidden_static[static_cast<std::size_t>(r) * cfg.d_s + j];
                }
                for (int k = 0; k < cfg.K; ++k) {
                    v += model.dynamic_mix[static_cast<std::size_t>(a) * cfg.K + k] *
                         state_at_snapshot(t, r, k);
                }
                f[a] = v + cfg.noise_region * rng.normal();
            }
        }
    }

    // EHR series: mixed pooled dynamic state, interpolated to each hour.
    ep.ehr_series.assign(static_cast<std::size_t>(M + 1) * cfg.N, 0.0);
    for (int j = 0; j <= M; ++j) {
        const double t = ep.ehr_times[static_cast<std::size_t>(j)];
        std::vector<double> pooled(static_cast<std::size_t>(cfg.K), 0.0);
        for (int r = 0; r < cfg.R; ++r) {
            for (int k = 0; k < cfg.K; ++k) {
                pooled[static_cast<std::size_t>(k)] += state_at_time(t, r, k) / cfg.R;
            }
        }
        double* x = ep.ehr_series.data() + static_cast<std::size_t>(j) * cfg.N;
        for (int a = 0; a < cfg.N; ++a) {
            double v = 0.0;
            for (int k = 0; k < cfg.K; ++k) {
                v += model.ehr_mix[static_cast<std::size_t>(a) * cfg.K + k] *
                     pooled[static_cast<std::size_t>(k)];
            }
            x[a] = v + cfg.noise_ehr * rng.normal();
        }
    }

    // Outcomes. With signal_region set, only that region's drift and static
    // latent feed the mortality risk; otherwise drift is pooled over regions.
    const bool planted = cfg.signal_region >= 0;
    std::vector<double> pooled_drift(static_cast<std::size_t>(cfg.K), 0.0);
    for (int r = 0; r < cfg.R; ++r) {
        if (planted && r != cfg.signal_region) continue;
        const double w = planted ? 1.0 : 1.0 / cfg.R;
        for (int i = 0; i < pairs; ++i) {
            for (int k = 0; k < cfg.K; ++k) {
                pooled_drift[static_cast<std::size_t>(k)] +=
                    w * ep.hidden_dynamic[(static_cast<std::size_t>(i) * cfg.R + r) * cfg.K + k] /
                    pairs;
            }
        }
    }
    double risk = model.mortality_bias;
    double los_score = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        risk += model.mortality_w[static_cast<std::size_t>(k)] * pooled_drift[static_cast<std::size_t>(k)];
        los_score += model.los_w[static_cast<std::size_t>(k)] * pooled_drift[static_cast<std::size_t>(k)];
    }
    if (planted) {
        for (int j = 0; j < cfg.d_s; ++j) {
            risk += model.mortality_static_w[static_cast<std::size_t>(j)] *
                    ep.hidden_static[static_cast<std::size_t>(cfg.signal_region) * cfg.d_s + j];
        }
    }
    ep.mortality_label = rng.bernoulli(logistic(risk)) ? 1 : 0;
    los_score += 0.25 * rng.normal();
    ep.los_class = 0;
    for (int c = 0; c < 3; ++c) {
        if (los_score > model.los_thresholds[c]) ep.los_class = c + 1;
    }

    // Demographics: first channel tracks the outcome risk, the rest is noise.
    ep.demographics.resize(static_cast<std::size_t>(cfg.P));
    ep.demographics[0] = 0.5 * risk + 0.5 * rng.normal();
    for (int p = 1; p < cfg.P; ++p) ep.demographics[static_cast<std::size_t>(p)] = rng.normal();

    // Labels mirror the drawn directions; presence mask emulates sparse
    // region-disease annotation.
    ep.progression_labels.resize(static_cast<std::size_t>(pairs) * cfg.R * cfg.K);
    ep.label_present.resize(ep.progression_labels.size());
    for (int i = 0; i < pairs; ++i) {
        for (int r = 0; r < cfg.R; ++r) {
            for (int k = 0; k < cfg.K; ++k) {
                const std::size_t idx = (static_cast<std::size_t>(i) * cfg.R + r) * cfg.K + k;
                ep.progression_labels[idx] = delta[static_cast<std::size_t>(r) * cfg.K + k];
                ep.label_present[idx] = rng.bernoulli(cfg.label_presence_rate) ? 1 : 0;
            }
        }
    }

    ep.validate();
    return ep;
}

std::vector<Episode> generate_cohort(const CohortConfig& config) {
    const CohortModel model = build_cohort_model(config);
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<std::size_t>(config.n_patients));
    for (int i = 0; i < config.n_patients; ++i) {
        std::uint64_t seed = Rng::derive(config.seed, static_cast<std::uint64_t>(i) + 1);
        episodes.push_back(generate_episode(config, model, seed, i));
        if (config.missing_ehr_rate > 0.0) {
            episodes.back() = inject_missing_ehr(episodes.back(), config.missing_ehr_rate,
                                                 Rng::derive(seed, 0xD7071));
        }
    }
    return episodes;
}

Episode inject_missing_ehr(const Episode& episode, double rate, std::uint64_t seed) {
    if (rate < 0.0 || rate > 1.0) throw ContractError("inject_missing_ehr: rate must be in [0,1]");
    if (episode.ehr_rows() < 2) {
        throw ContractError("inject_missing_ehr: episode needs at least 2 EHR rows");
    }
    if (rate == 0.0) return episode;
    Rng rng(seed);
    Episode out = episode;
    out.ehr_times.clear();
    out.ehr_series.clear();
    const int last = episode.ehr_rows() - 1;
    for (int j = 0; j <= last; ++j) {
        const bool forced = (j == 0 || j == last);
        const bool drop = rng.bernoulli(rate);
        if (!forced && drop) continue;
        out.ehr_times.push_back(episode.ehr_times[static_cast<std::size_t>(j)]);
        const double* src = episode.ehr_series.data() + static_cast<std::size_t>(j) * episode.N;
        out.ehr_series.insert(out.ehr_series.end(), src, src + episode.N);
    }
    out.validate();
    return out;
}

}  // namespace dipro
