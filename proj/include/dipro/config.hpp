#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dipro {

enum class Task { kMortality, kLos, kProgression };
enum class Ablation { kFull, kA1, kA2, kA3, kA4, kB1, kB2, kB3 };
enum class SelectionMetric { kMacroF1, kAccuracy, kAuprc };

std::string to_string(Task t);
std::string to_string(Ablation a);
std::string to_string(SelectionMetric m);
Task task_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);
SelectionMetric selection_metric_from_string(const std::string& s);

// Synthetic cohort generation settings. Episodes carry region snapshot
// features, an hourly EHR series, demographics, and labels for all three
// prediction tasks, plus hidden ground-truth factors in a separate sidecar.
struct CohortConfig {
    int n_patients = 500;
    int R = 6;        // anatomical regions per snapshot
    int K = 7;        // diseases (also the width of the dynamic latent)
    int d_in = 16;    // raw region feature width
    int N = 38;       // EHR variables
    int P = 7;        // demographic attributes
    int d_s = 4;      // static latent width
    // Snapshot-count distribution over T = 2,3,4,5.
    std::array<double, 4> t_probs = {1975.0 / 2720, 661.0 / 2720, 82.0 / 2720, 2.0 / 2720};
    double duration_hours = 48.0;
    double ehr_interval_hours = 1.0;
    double noise_region = 0.1;
    double noise_ehr = 0.05;
    double static_scale = 3.0;  // static anatomy dominates raw features
    double drift_scale = 1.0;
    double missing_ehr_rate = 0.0;
    double label_presence_rate = 1.0;
    // Per-disease priors over {worsened, no change, improved}; empty = skewed
    // clinical defaults (cycled when K > 7).
    std::vector<std::array<double, 3>> label_priors;
    int signal_region = -1;  // >= 0: only this region carries the outcome signal
    std::uint64_t seed = 1;

    void validate() const;
};

struct ModelDims {
    int d = 32;
    int d_in = 16;
    int R = 6;
    int K = 7;
    int N = 38;
    int P = 7;
    int ehr_heads = 4;  // global EHR encoder; cross-attentions are single-head
};

struct LossWeights {
    double pred = 2.0;
    double orth = 1.0;
    double temp = 0.0;
    double pae = 2.0;
    double static_rev = 1.0;  // inner weight on the reversal-consistency term
};

// Selected penalty presets per task.
LossWeights default_loss_weights(Task task);
SelectionMetric default_selection_metric(Task task);

struct ExperimentConfig {
    Task task = Task::kProgression;
    Ablation ablation = Ablation::kFull;
    ModelDims dims;
    LossWeights loss;
    double learning_rate = 3e-3;
    double dropout_rate = 0.1;
    int batch_size = 8;
    int accumulation_steps = 4;
    int max_epochs = 100;
    int patience = 10;
    SelectionMetric selection_metric = SelectionMetric::kMacroF1;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double missing_ehr_rate = 0.0;
    bool mask_normalize_halfwidth = false;
    CohortConfig cohort;

    void validate() const;
};

struct SweepGrid {
    std::vector<double> learning_rates = {8e-6, 5e-6, 1e-5, 5e-5};
    std::vector<double> dropouts = {0.1, 0.2, 0.3};
    std::vector<int> hidden_dims = {64, 128, 256};
    std::vector<double> lambda_temp = {0.01, 0.001, 0.1, 1.0};
    std::vector<double> lambda_pred = {2, 6, 10};
    std::vector<double> lambda_pae = {0.01, 0.1, 2};
    std::vector<double> lambda_orth = {0.001, 0.01, 0.1, 10};
    // Full cross product is large; sweep() can cap via max_configs (0 = all).
    int max_configs = 0;
};

// Plain-text config document: [section] headers and key = value lines,
// '#' comments. Unknown sections or keys are hard errors. Exact format is
// documented in docs/config-format.md.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
SweepGrid load_sweep_grid(const std::string& path);

std::string serialize_config(const ExperimentConfig& cfg);
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace dipro
