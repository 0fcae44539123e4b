#pragma once

#include <map>
#include <string>
#include <vector>

#include "dipro/checkpoint.hpp"
#include "dipro/config.hpp"
#include "dipro/episode.hpp"
#include "dipro/model.hpp"

namespace dipro {

// Adam with decoupled weight decay over a parameter store. LayerNorm gains/
// biases and other bias vectors are not exempted; at desk scale the
// difference is negligible.
class AdamW {
public:
    explicit AdamW(const ParamStore& params, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8, double weight_decay = 1e-2);
    void step(ParamStore& params, double lr);

private:
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Cosine annealing from lr_max at epoch 0 to lr_min at max_epochs.
double cosine_lr(double lr_max, double lr_min, int epoch, int max_epochs);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double lr = 0;
    double loss_total = 0, loss_pred = 0, loss_orth = 0, loss_temp = 0, loss_pae = 0;
    double val_metric = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};
// 70/10/20 split by episode index (episodes are independent patients).
SplitIndices split_cohort(std::size_t n);

// Flat metric map for one task evaluation, e.g. {"macro_f1": .., "auroc": ..}.
struct TaskMetrics {
    std::map<std::string, double> values;
    double selection(SelectionMetric m) const;
};

TaskMetrics evaluate(const Model& model, const std::vector<Episode>& episodes,
                     const std::vector<std::size_t>& indices);

struct TrainResult {
    std::vector<EpochRecord> history;
    std::vector<std::vector<double>> best_params;
    int best_epoch = -1;      // 1-based epoch of the retained checkpoint
    double best_metric = 0;
    bool diverged = false;
    TaskMetrics test_metrics;  // at the retained checkpoint
};

// One training run: split, optimize with gradient accumulation and cosine
// schedule, early-stop on the validation selection metric, retain the best
// checkpoint, then score the test split with it. missing_ehr_rate in the
// config drops EHR rows from training episodes only.
TrainResult train_single(const ExperimentConfig& config, const std::vector<Episode>& cohort,
                         std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    TrainResult result;
};

// Per-seed runs (parallel lanes capped by DIPRO_MAX_LANES, default 1).
std::vector<SeedRun> train_seeds(const ExperimentConfig& config,
                                 const std::vector<Episode>& cohort);

struct AblationRecord {
    Ablation variant = Ablation::kFull;
    std::size_t param_count = 0;
    std::vector<double> per_seed_test;  // selection metric per seed
    double mean = 0, stddev = 0;
};

AblationRecord run_ablation(Ablation variant, const ExperimentConfig& config,
                            const std::vector<Episode>& cohort);

struct GridEntry {
    ExperimentConfig config;
    double val_metric = 0;
    std::string label;  // compact axis summary
};

struct GridResult {
    GridEntry best;
    std::vector<GridEntry> leaderboard;  // evaluation order (lexicographic)
};

// Exhaustive sweep in lexicographic axis order (lr, dropout, hidden,
// lambda_temp, lambda_pred, lambda_pae, lambda_orth), first seed only,
// selected by validation metric with first-wins tie-break.
GridResult grid_search(const ExperimentConfig& base, const SweepGrid& grid,
                       const std::vector<Episode>& cohort);

struct RobustnessCell {
    double rate = 0;
    std::uint64_t seed = 0;
    double val_metric = 0;
    double test_metric = 0;
};

// Missing-EHR protocol: train at each rate (training split degraded,
// validation/test complete), per seed.
std::vector<RobustnessCell> robustness_protocol(const ExperimentConfig& config,
                                                const std::vector<Episode>& cohort,
                                                const std::vector<double>& rates);

// Cohort-averaged static-attention mass per region, normalized to sum to 1.
std::vector<double> export_region_attention(const Model& model,
                                            const std::vector<Episode>& episodes,
                                            const std::vector<std::size_t>& indices);

// Fan out fn(i) for i in [0, n) over at most DIPRO_MAX_LANES threads.
void parallel_for_lanes(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dipro
