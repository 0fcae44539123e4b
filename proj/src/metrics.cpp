#include "dipro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace dipro {

PredictionRecord make_record(int true_class, std::vector<double> scores) {
    if (scores.empty()) throw ContractError("prediction record needs scores");
    double total = 0.0;
    for (double s : scores) total += s;
    if (std::abs(total - 1.0) > 1e-9) {
        throw ContractError("prediction scores must sum to 1");
    }
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) {
        if (scores[static_cast<std::size_t>(i)] > scores[static_cast<std::size_t>(best)]) best = i;
    }
    return {true_class, best, std::move(scores)};
}

MacroPrf macro_prf1(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ContractError("macro_prf1: empty record list");
    std::set<int> truth_classes;
    for (const auto& r : records) truth_classes.insert(r.true_class);
    MacroPrf out;
    for (int c : truth_classes) {
        double tp = 0, fp = 0, fn = 0;
        for (const auto& r : records) {
            if (r.predicted_class == c && r.true_class == c) tp += 1;
            if (r.predicted_class == c && r.true_class != c) fp += 1;
            if (r.predicted_class != c && r.true_class == c) fn += 1;
        }
        const double p = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
        const double rc = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
        const double f1 = (p + rc) > 0 ? 2 * p * rc / (p + rc) : 0.0;
        out.precision += p;
        out.recall += rc;
        out.f1 += f1;
    }
    const double k = static_cast<double>(truth_classes.size());
    out.precision /= k;
    out.recall /= k;
    out.f1 /= k;
    return out;
}

double accuracy(const std::vector<PredictionRecord>& records) {
    if (records.empty()) throw ContractError("accuracy: empty record list");
    double hit = 0;
    for (const auto& r : records) hit += r.predicted_class == r.true_class ? 1.0 : 0.0;
    return hit / static_cast<double>(records.size());
}

double auroc(std::span<const double> scores, std::span<const int> binary_labels) {
    if (scores.size() != binary_labels.size()) throw ContractError("auroc: size mismatch");
    double npos = 0, nneg = 0;
    for (int y : binary_labels) (y ? npos : nneg) += 1;
    if (npos == 0 || nneg == 0) {
        throw UndefinedMetricError("auroc: needs both classes present");
    }
    // Rank-based Mann-Whitney with midranks for ties.
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t q = i; q <= j; ++q) rank[idx[q]] = mid;
        i = j + 1;
    }
    double rank_sum_pos = 0;
    for (std::size_t q = 0; q < scores.size(); ++q) {
        if (binary_labels[q]) rank_sum_pos += rank[q];
    }
    return (rank_sum_pos - npos * (npos + 1) / 2.0) / (npos * nneg);
}

double auprc(std::span<const double> scores, std::span<const int> binary_labels) {
    if (scores.size() != binary_labels.size()) throw ContractError("auprc: size mismatch");
    double npos = 0;
    for (int y : binary_labels) npos += y ? 1 : 0;
    if (npos == 0) throw UndefinedMetricError("auprc: needs at least one positive");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double tp = 0, fp = 0, prev_recall = 0, ap = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        // advance through a whole tie group before evaluating the threshold
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
            (binary_labels[idx[j]] ? tp : fp) += 1;
            ++j;
        }
        const double recall = tp / npos;
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

namespace {

template <typename MetricFn>
double ovr_macro(const std::vector<PredictionRecord>& records, MetricFn metric) {
    if (records.empty()) throw ContractError("ovr macro: empty record list");
    const std::size_t n_classes = records.front().scores.size();
    double total = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& r : records) {
            scores.push_back(r.scores[c]);
            labels.push_back(r.true_class == static_cast<int>(c) ? 1 : 0);
        }
        try {
            total += metric(scores, labels);
            ++counted;
        } catch (const UndefinedMetricError&) {
            // class absent (or no negatives); skip it
        }
    }
    if (counted == 0) throw UndefinedMetricError("ovr macro: no class has a defined curve");
    return total / counted;
}

}  // namespace

double auroc_ovr_macro(const std::vector<PredictionRecord>& records) {
    return ovr_macro(records, [](const std::vector<double>& s, const std::vector<int>& l) {
        return auroc(s, l);
    });
}

double auprc_ovr_macro(const std::vector<PredictionRecord>& records) {
    return ovr_macro(records, [](const std::vector<double>& s, const std::vector<int>& l) {
        return auprc(s, l);
    });
}

double cohens_kappa(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size() || truth.empty()) {
        throw ContractError("cohens_kappa: need equal-length nonempty inputs");
    }
    const double n = static_cast<double>(truth.size());
    std::map<int, double> truth_marg, pred_marg;
    double agree = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth_marg[truth[i]] += 1;
        pred_marg[pred[i]] += 1;
        if (truth[i] == pred[i]) agree += 1;
    }
    const double po = agree / n;
    double pe = 0;
    for (const auto& [cls, tc] : truth_marg) {
        auto it = pred_marg.find(cls);
        if (it != pred_marg.end()) pe += (tc / n) * (it->second / n);
    }
    if (pe >= 1.0) return 0.0;
    return (po - pe) / (1.0 - pe);
}

std::optional<int> disease_label_from_regions(std::span<const std::optional<int>> region_labels,
                                              RegionAggregation rule) {
    bool any = false;
    int counts[3] = {0, 0, 0};
    for (const auto& l : region_labels) {
        if (!l) continue;
        if (*l < -1 || *l > 1) throw LabelError("region label outside {-1,0,+1}");
        any = true;
        counts[*l + 1] += 1;
    }
    if (!any) return std::nullopt;
    if (rule == RegionAggregation::kWorseningDominant) {
        if (counts[0] > 0) return -1;
        if (counts[2] > 0) return 1;
        return 0;
    }
    // majority vote, worsening on ties
    int best = 0;
    for (int c = 1; c < 3; ++c) {
        if (counts[c] > counts[best]) best = c;
    }
    return best - 1;
}

}  // namespace dipro
