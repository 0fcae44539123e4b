#include "dipro/model.hpp"

#include <cmath>

#include "dipro/errors.hpp"
#include "dipro/temporal.hpp"

namespace dipro {

ExperimentConfig apply_ablation(ExperimentConfig config) {
    switch (config.ablation) {
        case Ablation::kFull: break;
        case Ablation::kA1: break;  // fusion replaced, losses intact
        case Ablation::kA2:
            config.loss.pae = 0.0;
            break;
        case Ablation::kA3:
            config.loss.pae = 0.0;
            break;
        case Ablation::kA4:
            config.loss.pae = 0.0;
            config.loss.orth = 0.0;
            config.loss.temp = 0.0;
            break;
        case Ablation::kB1:
            config.loss.orth = 0.0;
            break;
        case Ablation::kB2:
            config.loss.pae = 0.0;
            break;
        case Ablation::kB3:
            config.loss.temp = 0.0;
            break;
    }
    return config;
}

bool Model::pae_structure() const {
    switch (config_.ablation) {
        case Ablation::kFull:
        case Ablation::kA1:
        case Ablation::kB1:
        case Ablation::kB2:
        case Ablation::kB3:
            return true;
        default:
            return false;
    }
}

bool Model::mmf_active() const {
    switch (config_.ablation) {
        case Ablation::kFull:
        case Ablation::kA2:
        case Ablation::kB1:
        case Ablation::kB2:
        case Ablation::kB3:
            return true;
        default:
            return false;
    }
}

Model::Model(const ExperimentConfig& config, std::uint64_t init_seed)
    : config_(apply_ablation(config)) {
    config_.validate();
    Rng rng(init_seed);
    const int d = config_.dims.d;
    const int d_in = config_.dims.d_in;
    const int K = config_.dims.K;
    const int N = config_.dims.N;
    const int P = config_.dims.P;

    auto mlp = [&](const std::string& prefix, int in, int hidden, int out) {
        Mlp m;
        m.w1 = params_.create(prefix + ".w1", {in, hidden}, rng);
        m.b1 = params_.create_const(prefix + ".b1", {1, hidden}, 0.0);
        m.w2 = params_.create(prefix + ".w2", {hidden, out}, rng);
        m.b2 = params_.create_const(prefix + ".b2", {1, out}, 0.0);
        return m;
    };
    auto attn = [&](const std::string& prefix) {
        AttnProj w;
        w.wq = params_.create(prefix + ".wq", {d, d}, rng);
        w.bq = params_.create_const(prefix + ".bq", {1, d}, 0.0);
        w.wk = params_.create(prefix + ".wk", {d, d}, rng);
        w.bk = params_.create_const(prefix + ".bk", {1, d}, 0.0);
        w.wv = params_.create(prefix + ".wv", {d, d}, rng);
        w.bv = params_.create_const(prefix + ".bv", {1, d}, 0.0);
        return w;
    };
    auto ln = [&](const std::string& prefix) {
        LayerNormParams l;
        l.gain = params_.create_const(prefix + ".gain", {d}, 1.0);
        l.bias = params_.create_const(prefix + ".bias", {d}, 0.0);
        return l;
    };

    region_encoder_ = mlp("region_encoder", d_in, d, d);
    if (std_active()) f_static_ = mlp("static_proj", 2 * d, 2 * d, d);
    f_dynamic_ = mlp("dynamic_proj", 2 * d, 2 * d, d);

    const bool need_heads = config_.task == Task::kProgression || pae_structure();
    if (need_heads) {
        for (int k = 0; k < K; ++k) {
            head_list_.push_back(mlp("head" + std::to_string(k), d, d, 3));
        }
    }

    ehr_embed_w_ = params_.create("ehr_embed.w", {N, d}, rng);
    ehr_embed_b_ = params_.create_const("ehr_embed.b", {1, d}, 0.0);
    ehr_attn_ = attn("ehr_encoder.attn");
    ehr_attn_wo_ = params_.create("ehr_encoder.attn.wo", {d, d}, rng);
    ehr_attn_bo_ = params_.create_const("ehr_encoder.attn.bo", {1, d}, 0.0);
    ehr_ln1_ = ln("ehr_encoder.ln1");
    ehr_ff_ = mlp("ehr_encoder.ff", d, 2 * d, d);
    ehr_ln2_ = ln("ehr_encoder.ln2");

    if (mmf_active()) {
        time_embed_ = mlp("time_embed", 3, d, d);
        local_attn_ = attn("local_attn");
        proj_ehr_ = params_.create("local_fuse.proj_ehr", {d, d}, rng);
        proj_dyn_ = params_.create("local_fuse.proj_dyn", {d, d}, rng);
        fuse_attn_ = attn("local_fuse.attn");
        fuse_ln_ = ln("local_fuse.ln");
        global_attn_ = attn("global_fuse.attn");
        global_ln_ = ln("global_fuse.ln");
        global_self_attn_ = attn("global_fuse.self_attn");
        global_self_ln_ = ln("global_fuse.self_ln");
        predict_attn_ = attn("predict.attn");
        predict_ln_ = ln("predict.ln");
    } else {
        SimpleFusion sf;
        sf.proj = attn("simple_fusion.attn");
        sf.wo = params_.create("simple_fusion.attn.wo", {d, d}, rng);
        sf.bo = params_.create_const("simple_fusion.attn.bo", {1, d}, 0.0);
        sf.ln = ln("simple_fusion.ln");
        simple_fusion_ = sf;
    }

    demo_mlp_ = mlp("demo_mlp", P, d, d);

    if (config_.task != Task::kProgression) {
        const int classes = config_.task == Task::kMortality ? 2 : 4;
        task_head_ = mlp("task_head", d, d, classes);
    }
}

Tensor Model::maybe_dropout(const Tensor& x, const ForwardOptions& opt) const {
    if (!opt.training || config_.dropout_rate == 0.0) return x;
    if (!opt.rng) throw ContractError("forward: training with dropout requires an rng");
    return dropout(x, config_.dropout_rate, *opt.rng, true);
}

Tensor Model::apply_mlp(const Mlp& mlp, const Tensor& x, const ForwardOptions& opt) const {
    auto h = gelu(add_rowvec(matmul(x, mlp.w1), mlp.b1));
    h = maybe_dropout(h, opt);
    return add_rowvec(matmul(h, mlp.w2), mlp.b2);
}

Tensor Model::apply_layer_norm(const LayerNormParams& ln, const Tensor& x) const {
    return layer_norm(x, ln.gain, ln.bias, 1e-5);
}

Tensor Model::attend(const AttnProj& w, const Tensor& q_rows, const Tensor& kv_rows,
                     const Tensor* bias_over_keys, Tensor* weights_out,
                     bool* all_masked_flag) const {
    const int d = config_.dims.d;
    auto q = add_rowvec(matmul(q_rows, w.wq), w.bq);
    auto k = add_rowvec(matmul(kv_rows, w.wk), w.bk);
    auto v = add_rowvec(matmul(kv_rows, w.wv), w.bv);
    auto logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    if (bias_over_keys) logits = add_rowvec(logits, *bias_over_keys);
    auto weights = softmax_lastdim(logits, all_masked_flag);
    if (weights_out) *weights_out = weights;
    return matmul(weights, v);
}

Tensor Model::multi_head_attention(const AttnProj& proj, const Tensor& wo, const Tensor& bo,
                                   const Tensor& rows, int heads,
                                   const ForwardOptions& opt) const {
    const int d = config_.dims.d;
    const int dh = d / heads;
    auto q = add_rowvec(matmul(rows, proj.wq), proj.bq);
    auto k = add_rowvec(matmul(rows, proj.wk), proj.bk);
    auto v = add_rowvec(matmul(rows, proj.wv), proj.bv);
    Tensor merged;
    for (int h = 0; h < heads; ++h) {
        auto qh = slice_cols(q, h * dh, (h + 1) * dh);
        auto kh = slice_cols(k, h * dh, (h + 1) * dh);
        auto vh = slice_cols(v, h * dh, (h + 1) * dh);
        auto wts = softmax_lastdim(
            scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh))));
        auto out_h = matmul(wts, vh);
        merged = h == 0 ? out_h : concat_cols(merged, out_h);
    }
    auto out = add_rowvec(matmul(merged, wo), bo);
    return maybe_dropout(out, opt);
}

Tensor Model::encode_region(const Tensor& x, const ForwardOptions& opt) const {
    if (x.cols() != config_.dims.d_in) {
        throw DimError("encode_region: expected width " + std::to_string(config_.dims.d_in) +
                       ", got " + shape_str(x.shape()));
    }
    return apply_mlp(region_encoder_, x, opt);
}

DisentangledPair Model::disentangle(const Tensor& f_i, const Tensor& f_next, bool with_reversal,
                                    const ForwardOptions& opt) const {
    if (f_i.cols() != config_.dims.d || f_next.cols() != config_.dims.d) {
        throw DimError("disentangle: features must have width d=" + std::to_string(config_.dims.d));
    }
    if (!f_static_.defined()) {
        throw ContractError("disentangle: static projection absent in this variant");
    }
    DisentangledPair pair;
    auto cat = concat_cols(f_i, f_next);
    pair.S = apply_mlp(f_static_, cat, opt);
    pair.D = apply_mlp(f_dynamic_, cat, opt);
    if (with_reversal) {
        auto rcat = concat_cols(f_next, f_i);
        pair.S_rev = apply_mlp(f_static_, rcat, opt);
        pair.D_rev = apply_mlp(f_dynamic_, rcat, opt);
    }
    return pair;
}

Tensor Model::progression_logits(const Tensor& d_rows, int disease,
                                 const ForwardOptions& opt) const {
    if (disease < 0 || disease >= static_cast<int>(head_list_.size())) {
        throw LabelError("progression_logits: disease index " + std::to_string(disease) +
                         " out of range");
    }
    return apply_mlp(head_list_[static_cast<std::size_t>(disease)], d_rows, opt);
}

Tensor Model::encode_ehr_global(const Episode& ep, const ForwardOptions& opt) const {
    if (ep.N != config_.dims.N) {
        throw DimError("encode_ehr_global: EHR width mismatch");
    }
    if (ep.ehr_rows() < 2) throw ContractError("encode_ehr_global: need at least 2 EHR rows");
    for (int j = 1; j < ep.ehr_rows(); ++j) {
        if (!(ep.ehr_times[static_cast<std::size_t>(j)] >
              ep.ehr_times[static_cast<std::size_t>(j - 1)])) {
            throw ContractError("encode_ehr_global: timestamps must be strictly increasing");
        }
    }
    const int d = config_.dims.d;
    const int rows = ep.ehr_rows();
    auto x = Tensor::from({rows, config_.dims.N}, ep.ehr_series);
    auto embedded = add_rowvec(matmul(x, ehr_embed_w_), ehr_embed_b_);
    auto pos = Tensor::from({rows, d}, sinusoidal_positions(ep.ehr_times, d));
    auto h = add(embedded, pos);

    auto attn_out = multi_head_attention(ehr_attn_, ehr_attn_wo_, ehr_attn_bo_, h,
                                         config_.dims.ehr_heads, opt);
    auto x1 = apply_layer_norm(ehr_ln1_, add(h, attn_out));
    auto ff = maybe_dropout(apply_mlp(ehr_ff_, x1, opt), opt);
    return apply_layer_norm(ehr_ln2_, add(x1, ff));
}

Tensor Model::local_ehr_attend(const Tensor& e_global, std::span<const double> ehr_times,
                               double t_i, double t_next, bool* fallback_used,
                               Tensor* weights_out, const ForwardOptions& opt) const {
    if (!local_attn_) {
        throw ContractError("local_ehr_attend: interval fusion absent in this variant");
    }
    if (static_cast<int>(ehr_times.size()) != e_global.rows()) {
        throw DimError("local_ehr_attend: timestamp count must match encoded rows");
    }
    auto bias_vec =
        interval_attention_bias(ehr_times, t_i, t_next, config_.mask_normalize_halfwidth,
                                fallback_used);
    const int rows = e_global.rows();
    std::vector<double> raw(static_cast<std::size_t>(rows) * 3);
    for (int j = 0; j < rows; ++j) {
        auto f = time_embed_raw(ehr_times[static_cast<std::size_t>(j)], t_i, t_next);
        raw[static_cast<std::size_t>(j) * 3 + 0] = f[0];
        raw[static_cast<std::size_t>(j) * 3 + 1] = f[1];
        raw[static_cast<std::size_t>(j) * 3 + 2] = f[2];
    }
    auto te = apply_mlp(time_embed_, Tensor::from({rows, 3}, std::move(raw)), opt);
    auto bias = Tensor::from({1, rows}, std::move(bias_vec));
    bool all_masked = false;
    auto out = attend(*local_attn_, te, e_global, &bias, weights_out, &all_masked);
    if (all_masked) {
        // the nearest-timestamp fallback makes this unreachable
        throw NumericError("local_ehr_attend: fully masked attention row");
    }
    return out;
}

std::vector<PairValues> Model::disentangle_episode(const Episode& ep) const {
    ForwardOptions opt;  // eval mode
    const int R = config_.dims.R;
    auto x = Tensor::from({ep.T * R, config_.dims.d_in}, ep.region_features);
    auto f = encode_region(x, opt);
    std::vector<PairValues> out;
    for (int i = 0; i + 1 < ep.T; ++i) {
        auto f_i = slice_rows(f, i * R, (i + 1) * R);
        auto f_n = slice_rows(f, (i + 1) * R, (i + 2) * R);
        auto pair = disentangle(f_i, f_n, true, opt);
        PairValues pv;
        pv.S.assign(pair.S.values().begin(), pair.S.values().end());
        pv.D.assign(pair.D.values().begin(), pair.D.values().end());
        pv.S_rev.assign(pair.S_rev.values().begin(), pair.S_rev.values().end());
        pv.D_rev.assign(pair.D_rev.values().begin(), pair.D_rev.values().end());
        out.push_back(std::move(pv));
    }
    return out;
}

Tensor Model::reversal_loss(const std::vector<DisentangledPair>& pairs, const Episode& ep,
                            double lambda_static, const ForwardOptions& opt) const {
    if (pairs.empty()) throw ContractError("reversal_loss: empty pair list");
    const int R = config_.dims.R;
    const int K = config_.dims.K;
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pair = pairs[i];
        if (!pair.D_rev.defined()) {
            throw ContractError("reversal_loss: reversed features missing");
        }
        Tensor slot_acc = Tensor::scalar(0.0);
        int present = 0;
        for (int k = 0; k < K; ++k) {
            auto fwd = progression_logits(pair.D, k, opt);
            auto rev = progression_logits(pair.D_rev, k, opt);
            for (int r = 0; r < R; ++r) {
                if (!ep.present(static_cast<int>(i), r, k)) continue;
                const int y = ep.label(static_cast<int>(i), r, k);
                auto ce_f = cross_entropy(row(fwd, r), label_to_class(y));
                auto ce_r = cross_entropy(row(rev, r), label_to_class(negate_label(y)));
                slot_acc = add(slot_acc, add(ce_f, ce_r));
                ++present;
            }
        }
        Tensor pair_term =
            present > 0 ? scale(slot_acc, 1.0 / present) : Tensor::scalar(0.0);
        if (lambda_static != 0.0) {
            auto diff = sub(pair.S, pair.S_rev);
            pair_term = add(pair_term, scale(sum(mul(diff, diff)), lambda_static));
        }
        total = add(total, pair_term);
    }
    return scale(total, 1.0 / static_cast<double>(pairs.size()));
}

Tensor orthogonality_loss(const std::vector<DisentangledPair>& pairs) {
    if (pairs.empty()) throw ContractError("orthogonality_loss: empty batch");
    Tensor acc = Tensor::scalar(0.0);
    int n = 0;
    for (const auto& pair : pairs) {
        const int R = pair.S.rows();
        for (int r = 0; r < R; ++r) {
            auto cs = cosine_similarity(row(pair.S, r), row(pair.D, r));
            acc = add(acc, mul(cs, cs));
            ++n;
        }
    }
    return scale(acc, 1.0 / n);
}

Tensor temporal_consistency_loss(const std::vector<DisentangledPair>& pairs, int R) {
    // Defined only from three snapshots up; two snapshots yield exactly zero.
    if (pairs.size() < 2) return Tensor::scalar(0.0);
    Tensor acc = Tensor::scalar(0.0);
    for (std::size_t i = 0; i + 1 < pairs.size(); ++i) {
        auto diff = sub(pairs[i].S, pairs[i + 1].S);
        acc = add(acc, sum(mul(diff, diff)));
    }
    const double n = static_cast<double>(pairs.size() - 1) * R;
    return scale(acc, 1.0 / n);
}

namespace {

std::vector<double> softmax_values(std::span<const double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp(logits[j] - mx);
        z += out[j];
    }
    for (auto& v : out) v /= z;
    return out;
}

}  // namespace

EpisodeOutput Model::forward(const Episode& ep, const ForwardOptions& opt) const {
    const auto& dims = config_.dims;
    if (ep.d_in != dims.d_in || ep.R != dims.R || ep.K != dims.K || ep.N != dims.N ||
        ep.P != dims.P) {
        throw DimError("forward: episode dims do not match the model (d_in/R/K/N/P)");
    }
    const int R = dims.R;
    const int K = dims.K;
    const int n_pairs = ep.pairs();

    EpisodeOutput out;
    out.pred_ce = Tensor::scalar(0.0);
    out.orth = Tensor::scalar(0.0);
    out.temp = Tensor::scalar(0.0);
    out.pae = Tensor::scalar(0.0);

    // Region features for every snapshot in one pass.
    auto x_regions = Tensor::from({ep.T * R, dims.d_in}, ep.region_features);
    auto f = encode_region(x_regions, opt);

    const bool run_reversal = pae_structure() && config_.loss.pae > 0.0;
    std::vector<DisentangledPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        auto f_i = slice_rows(f, i * R, (i + 1) * R);
        auto f_n = slice_rows(f, (i + 1) * R, (i + 2) * R);
        if (std_active()) {
            pairs.push_back(disentangle(f_i, f_n, run_reversal, opt));
        } else {
            DisentangledPair pv;  // plain pair encoding, no static/dynamic split
            pv.D = apply_mlp(f_dynamic_, concat_cols(f_i, f_n), opt);
            pairs.push_back(std::move(pv));
        }
    }

    if (std_active()) {
        if (config_.loss.orth > 0.0) out.orth = orthogonality_loss(pairs);
        if (config_.loss.temp > 0.0) out.temp = temporal_consistency_loss(pairs, R);
    }
    if (run_reversal) {
        out.pae = reversal_loss(pairs, ep, config_.loss.static_rev, opt);
    }

    // Fusion and prediction.
    auto e_global = encode_ehr_global(ep, opt);
    Tensor fused_rows;      // rows aligned with the dynamic rows first
    Tensor static_weights;  // predict-stage attention over static rows
    if (mmf_active()) {
        std::vector<Tensor> d_fuse_list;
        for (int i = 0; i < n_pairs; ++i) {
            const double t_i = ep.snapshot_times[static_cast<std::size_t>(i)];
            const double t_n = ep.snapshot_times[static_cast<std::size_t>(i) + 1];
            bool fallback = false;
            auto e_local = local_ehr_attend(e_global, ep.ehr_times, t_i, t_n, &fallback, nullptr,
                                            opt);
            out.mask_fallback_used = out.mask_fallback_used || fallback;
            e_local = maybe_dropout(e_local, opt);
            auto keys = concat_rows({matmul(e_local, proj_ehr_), matmul(pairs[static_cast<std::size_t>(i)].D, proj_dyn_)});
            auto mixed = attend(*fuse_attn_, pairs[static_cast<std::size_t>(i)].D, keys, nullptr,
                                nullptr, nullptr);
            mixed = maybe_dropout(mixed, opt);
            d_fuse_list.push_back(
                apply_layer_norm(fuse_ln_, add(mixed, pairs[static_cast<std::size_t>(i)].D)));
        }
        auto d_global = concat_rows(d_fuse_list);

        auto g = attend(*global_attn_, e_global, d_global, nullptr, nullptr, nullptr);
        g = maybe_dropout(g, opt);
        auto h0 = apply_layer_norm(global_ln_, add(g, e_global));
        auto s = attend(*global_self_attn_, h0, h0, nullptr, nullptr, nullptr);
        s = maybe_dropout(s, opt);
        auto h_global = apply_layer_norm(global_self_ln_, add(s, h0));

        std::vector<Tensor> static_rows;
        for (const auto& pair : pairs) static_rows.push_back(pair.S);
        auto demo_row =
            apply_mlp(demo_mlp_, Tensor::from({1, dims.P}, ep.demographics), opt);
        static_rows.push_back(demo_row);
        auto h_static = concat_rows(static_rows);

        auto queries = concat_rows({d_global, h_global});
        auto att = attend(*predict_attn_, queries, h_static, nullptr, &static_weights, nullptr);
        att = maybe_dropout(att, opt);
        fused_rows = apply_layer_norm(predict_ln_, add(att, queries));
        out.attention_available = true;
    } else {
        // Simple fusion: stack everything and run one multi-head self-attention
        // block (dynamic rows first so predictions slice cleanly).
        std::vector<Tensor> rows_list;
        for (const auto& pair : pairs) rows_list.push_back(pair.D);
        if (std_active()) {
            for (const auto& pair : pairs) rows_list.push_back(pair.S);
        }
        rows_list.push_back(e_global);
        rows_list.push_back(apply_mlp(demo_mlp_, Tensor::from({1, dims.P}, ep.demographics), opt));
        auto stacked = concat_rows(rows_list);
        const auto& sf = *simple_fusion_;
        auto mixed = multi_head_attention(sf.proj, sf.wo, sf.bo, stacked, dims.ehr_heads, opt);
        fused_rows = apply_layer_norm(sf.ln, add(stacked, mixed));
    }

    // Task prediction.
    if (config_.task == Task::kProgression) {
        auto dyn_rows = slice_rows(fused_rows, 0, n_pairs * R);
        Tensor ce_acc = Tensor::scalar(0.0);
        int present = 0;
        for (int k = 0; k < K; ++k) {
            auto logits = progression_logits(dyn_rows, k, opt);
            for (int i = 0; i < n_pairs; ++i) {
                for (int r = 0; r < R; ++r) {
                    if (!ep.present(i, r, k)) continue;
                    const int y = ep.label(i, r, k);
                    ce_acc = add(ce_acc, cross_entropy(row(logits, i * R + r), label_to_class(y)));
                    ++present;
                    if (opt.want_eval_outputs) {
                        SlotPrediction sp;
                        sp.pair = i;
                        sp.region = r;
                        sp.disease = k;
                        sp.true_label = y;
                        auto probs = softmax_values(
                            std::span<const double>(logits.values().data() +
                                                        static_cast<std::size_t>(i * R + r) * 3,
                                                    3));
                        sp.scores = {probs[0], probs[1], probs[2]};
                        out.slots.push_back(sp);
                    }
                }
            }
        }
        out.pred_ce = present > 0 ? scale(ce_acc, 1.0 / present) : Tensor::scalar(0.0);
    } else {
        auto pooled = mean_rows(fused_rows);
        auto logits = apply_mlp(task_head_, pooled, opt);
        const int target = config_.task == Task::kMortality ? ep.mortality_label : ep.los_class;
        out.pred_ce = cross_entropy(row(logits, 0), target);
        if (opt.want_eval_outputs) {
            out.task_scores = softmax_values(logits.values());
        }
    }

    if (out.attention_available && opt.want_eval_outputs) {
        // Mean attention mass per region over all query rows; the demographic
        // row is excluded.
        const int q_rows = static_weights.rows();
        const int s_rows = static_weights.cols();
        out.region_attention.assign(static_cast<std::size_t>(R), 0.0);
        for (int q = 0; q < q_rows; ++q) {
            for (int j = 0; j < s_rows - 1; ++j) {
                out.region_attention[static_cast<std::size_t>(j % R)] +=
                    static_weights.at(q, j) / q_rows;
            }
        }
    }
    return out;
}

BatchLoss total_loss(const std::vector<EpisodeOutput>& outputs, const ExperimentConfig& config) {
    if (outputs.empty()) throw ContractError("total_loss: empty batch");
    const double inv = 1.0 / static_cast<double>(outputs.size());
    BatchLoss bl;
    Tensor acc = Tensor::scalar(0.0);
    for (const auto& o : outputs) {
        Tensor episode_total = scale(o.pred_ce, config.loss.pred);
        if (config.loss.orth > 0.0) episode_total = add(episode_total, scale(o.orth, config.loss.orth));
        if (config.loss.temp > 0.0) episode_total = add(episode_total, scale(o.temp, config.loss.temp));
        if (config.loss.pae > 0.0) episode_total = add(episode_total, scale(o.pae, config.loss.pae));
        acc = add(acc, episode_total);
        bl.pred += o.pred_ce.item() * inv;
        bl.orth += o.orth.item() * inv;
        bl.temp += o.temp.item() * inv;
        bl.pae += o.pae.item() * inv;
    }
    bl.total = scale(acc, inv);
    const struct {
        const char* name;
        double v;
    } terms[] = {{"pred", bl.pred}, {"orth", bl.orth}, {"temp", bl.temp},
                 {"pae", bl.pae},   {"total", bl.total.item()}};
    for (const auto& t : terms) {
        if (!std::isfinite(t.v)) {
            throw NumericError(std::string("total_loss: non-finite term '") + t.name + "'");
        }
    }
    return bl;
}

}  // namespace dipro
