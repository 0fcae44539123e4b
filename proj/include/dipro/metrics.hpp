#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dipro/errors.hpp"

namespace dipro {

// A metric whose definition does not apply to the given inputs (e.g. AUROC
// with a single class present).
struct UndefinedMetricError : ContractError {
    explicit UndefinedMetricError(const std::string& msg) : ContractError(msg) {}
};

struct PredictionRecord {
    int true_class = 0;
    int predicted_class = 0;          // argmax(scores), lowest index on ties
    std::vector<double> scores;       // post-softmax, sums to 1
};

// Builds a record with the shared argmax/tie-break convention applied.
PredictionRecord make_record(int true_class, std::vector<double> scores);

struct MacroPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-class precision/recall/F1 with the 0-convention for empty denominators,
// unweighted mean over the classes present in the truth set.
MacroPrf macro_prf1(const std::vector<PredictionRecord>& records);

double accuracy(const std::vector<PredictionRecord>& records);

// Mann-Whitney formulation: probability a random positive outscores a random
// negative, ties counted 1/2. Requires both classes present.
double auroc(std::span<const double> scores, std::span<const int> binary_labels);

// Average-precision estimator: sum of (R_n - R_{n-1}) * P_n over descending
// score thresholds, no interpolation. Requires at least one positive.
double auprc(std::span<const double> scores, std::span<const int> binary_labels);

// One-vs-rest macro averages for multiclass tasks; classes with undefined
// binary curves (absent positives or single-class labels) are skipped.
double auroc_ovr_macro(const std::vector<PredictionRecord>& records);
double auprc_ovr_macro(const std::vector<PredictionRecord>& records);

// (p_o - p_e) / (1 - p_e), with p_e from the marginal products; 0 when p_e = 1.
double cohens_kappa(std::span<const int> truth, std::span<const int> pred);

enum class RegionAggregation {
    kWorseningDominant,  // any -1 -> -1, else any +1 -> +1, else 0
    kMajorityVote,       // most frequent label, worsening wins ties
};

// Disease-level label from per-region labels (absent = nullopt). Returns
// nullopt when every region is absent.
std::optional<int> disease_label_from_regions(
    std::span<const std::optional<int>> region_labels,
    RegionAggregation rule = RegionAggregation::kWorseningDominant);

}  // namespace dipro
