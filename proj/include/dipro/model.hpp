#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "dipro/config.hpp"
#include "dipro/episode.hpp"
#include "dipro/params.hpp"
#include "dipro/tensor.hpp"

namespace dipro {

// Two-layer perceptron block: gelu(x W1 + b1) W2 + b2, dropout on the hidden
// activation while training.
struct Mlp {
    Tensor w1, b1, w2, b2;
    bool defined() const { return w1.defined(); }
};

struct AttnProj {
    Tensor wq, bq, wk, bk, wv, bv;
};

struct LayerNormParams {
    Tensor gain, bias;
};

// Static/dynamic split of one consecutive snapshot pair: one row per region.
// The reversed counterparts come from feeding the pair in swapped order
// through the same projections.
struct DisentangledPair {
    Tensor S, D;          // R x d
    Tensor S_rev, D_rev;  // defined when the reversal branch runs
};

// Per-slot progression prediction exported for metric computation.
struct SlotPrediction {
    int pair = 0, region = 0, disease = 0;
    int true_label = 0;  // {-1,0,+1}
    std::array<double, 3> scores{};
};

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
    bool want_eval_outputs = true;
};

struct EpisodeOutput {
    // Scalar graph tensors feeding the composite objective.
    Tensor pred_ce;  // task cross-entropy (progression: mean over present slots)
    Tensor orth;
    Tensor temp;
    Tensor pae;
    // Evaluation artifacts (plain values).
    std::vector<double> task_scores;       // softmax probs for mortality/los
    std::vector<SlotPrediction> slots;     // progression slots (present only)
    std::vector<double> region_attention;  // mean static-attention mass per region
    bool attention_available = false;
    bool mask_fallback_used = false;
};

// Value-level disentanglement dump for probes and reversal diagnostics.
struct PairValues {
    std::vector<double> S, D, S_rev, D_rev;  // each R x d row-major
};

// Zero out the loss terms an ablation variant disables (B1/B2/B3 and the
// module removals A2/A3/A4).
ExperimentConfig apply_ablation(ExperimentConfig config);

class Model {
public:
    Model(const ExperimentConfig& config, std::uint64_t init_seed);

    const ExperimentConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    bool has_static_attention() const { return predict_attn_.has_value(); }

    EpisodeOutput forward(const Episode& episode, const ForwardOptions& opt) const;

    // Building blocks, exposed for direct testing.
    Tensor encode_region(const Tensor& x, const ForwardOptions& opt = {}) const;
    DisentangledPair disentangle(const Tensor& f_i, const Tensor& f_next, bool with_reversal,
                                 const ForwardOptions& opt = {}) const;
    Tensor progression_logits(const Tensor& d_rows, int disease,
                              const ForwardOptions& opt = {}) const;
    Tensor encode_ehr_global(const Episode& episode, const ForwardOptions& opt = {}) const;
    // Interval-focused attention over an encoded EHR sequence; queries are the
    // per-timestamp time embeddings, keys/values the encoded rows, biased by
    // the center-focused interval mask.
    Tensor local_ehr_attend(const Tensor& e_global, std::span<const double> ehr_times,
                            double t_i, double t_next, bool* fallback_used = nullptr,
                            Tensor* weights_out = nullptr,
                            const ForwardOptions& opt = {}) const;

    // Value-level disentanglement of every pair (no loss assembly).
    std::vector<PairValues> disentangle_episode(const Episode& episode) const;

    // Per-episode reversal loss: CE on forward and label-negated reversed
    // predictions averaged over present slots, plus the static-consistency
    // penalty summed over regions, averaged over pairs.
    Tensor reversal_loss(const std::vector<DisentangledPair>& pairs, const Episode& episode,
                         double lambda_static, const ForwardOptions& opt = {}) const;

private:
    struct SimpleFusion {  // ablation fusion: stacked rows + multi-head self-attention
        AttnProj proj;
        Tensor wo, bo;
        LayerNormParams ln;
    };

    Tensor apply_mlp(const Mlp& mlp, const Tensor& x, const ForwardOptions& opt) const;
    Tensor apply_layer_norm(const LayerNormParams& ln, const Tensor& x) const;
    Tensor attend(const AttnProj& w, const Tensor& q_rows, const Tensor& kv_rows,
                  const Tensor* bias_over_keys, Tensor* weights_out, bool* all_masked_flag) const;
    Tensor multi_head_attention(const AttnProj& proj, const Tensor& wo, const Tensor& bo,
                                const Tensor& rows, int heads, const ForwardOptions& opt) const;
    Tensor maybe_dropout(const Tensor& x, const ForwardOptions& opt) const;

    bool std_active() const { return config_.ablation != Ablation::kA4; }
    bool pae_structure() const;
    bool mmf_active() const;

    ExperimentConfig config_;
    ParamStore params_;

    Mlp region_encoder_;
    Mlp f_static_;   // absent under A4
    Mlp f_dynamic_;  // doubles as the plain pair encoder under A4
    std::vector<Mlp> head_list_;  // K disease-specific heads

    Tensor ehr_embed_w_, ehr_embed_b_;
    AttnProj ehr_attn_;
    Tensor ehr_attn_wo_, ehr_attn_bo_;
    LayerNormParams ehr_ln1_, ehr_ln2_;
    Mlp ehr_ff_;

    Mlp time_embed_;
    std::optional<AttnProj> local_attn_;
    Tensor proj_ehr_, proj_dyn_;
    std::optional<AttnProj> fuse_attn_;
    LayerNormParams fuse_ln_;
    std::optional<AttnProj> global_attn_;
    LayerNormParams global_ln_;
    std::optional<AttnProj> global_self_attn_;
    LayerNormParams global_self_ln_;
    Mlp demo_mlp_;
    std::optional<AttnProj> predict_attn_;
    LayerNormParams predict_ln_;
    Mlp task_head_;  // mortality/los only
    std::optional<SimpleFusion> simple_fusion_;
};

// Composite objective over a batch: lambda-weighted mean of per-episode terms.
// Throws NumericError naming the first non-finite term.
struct BatchLoss {
    Tensor total;
    double pred = 0, orth = 0, temp = 0, pae = 0;
};
BatchLoss total_loss(const std::vector<EpisodeOutput>& outputs, const ExperimentConfig& config);

// Episode-level loss pieces (exposed for tests).
Tensor orthogonality_loss(const std::vector<DisentangledPair>& pairs);
Tensor temporal_consistency_loss(const std::vector<DisentangledPair>& pairs, int R);

}  // namespace dipro
