#include "dipro/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <thread>

#include "dipro/errors.hpp"
#include "dipro/metrics.hpp"

namespace dipro {

AdamW::AdamW(const ParamStore& params, double beta1, double beta2, double eps,
             double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    for (const auto& [name, t] : params.entries()) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

void AdamW::step(ParamStore& params, double lr) {
    if (m_.size() != params.entries().size()) {
        throw ContractError("AdamW: parameter store changed after construction");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < m_.size(); ++pi) {
        Tensor t = params.entries()[pi].second;
        auto vals = t.values_mut();
        auto g = t.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < vals.size(); ++i) {
            vals[i] -= lr * weight_decay_ * vals[i];  // decoupled decay
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            vals[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double cosine_lr(double lr_max, double lr_min, int epoch, int max_epochs) {
    if (max_epochs < 1) throw ContractError("cosine_lr: max_epochs must be >= 1");
    const double progress = static_cast<double>(epoch) / max_epochs;
    return lr_min + (lr_max - lr_min) * (1.0 + std::cos(M_PI * progress)) / 2.0;
}

SplitIndices split_cohort(std::size_t n) {
    if (n < 3) throw ContractError("split_cohort: need at least 3 episodes");
    SplitIndices s;
    const std::size_t n_train = std::max<std::size_t>(1, static_cast<std::size_t>(n * 0.7));
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(n * 0.1));
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train) {
            s.train.push_back(i);
        } else if (i < n_train + n_val && s.test.empty() && i + 1 < n) {
            s.val.push_back(i);
        } else {
            s.test.push_back(i);
        }
    }
    if (s.val.empty() || s.test.empty()) throw ContractError("split_cohort: degenerate split");
    return s;
}

double TaskMetrics::selection(SelectionMetric m) const {
    const char* key = nullptr;
    switch (m) {
        case SelectionMetric::kMacroF1: key = "macro_f1"; break;
        case SelectionMetric::kAccuracy: key = "accuracy"; break;
        case SelectionMetric::kAuprc: key = "auprc"; break;
    }
    auto it = values.find(key);
    if (it == values.end()) {
        throw ContractError(std::string("selection metric '") + key + "' not computed for task");
    }
    return it->second;
}

TaskMetrics evaluate(const Model& model, const std::vector<Episode>& episodes,
                     const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ContractError("evaluate: empty index list");
    ForwardOptions opt;
    opt.training = false;
    opt.want_eval_outputs = true;
    TaskMetrics out;
    const Task task = model.config().task;
    if (task == Task::kProgression) {
        std::vector<PredictionRecord> records;
        for (std::size_t idx : indices) {
            auto fo = model.forward(episodes[idx], opt);
            for (const auto& slot : fo.slots) {
                records.push_back(make_record(
                    label_to_class(slot.true_label),
                    {slot.scores[0], slot.scores[1], slot.scores[2]}));
            }
        }
        if (records.empty()) throw ContractError("evaluate: no labeled progression slots");
        auto prf = macro_prf1(records);
        out.values["macro_precision"] = prf.precision;
        out.values["macro_recall"] = prf.recall;
        out.values["macro_f1"] = prf.f1;
        out.values["accuracy"] = accuracy(records);
        try {
            out.values["auroc"] = auroc_ovr_macro(records);
            out.values["auprc"] = auprc_ovr_macro(records);
        } catch (const UndefinedMetricError&) {
            // single-class eval slice; leave the curve metrics out
        }
    } else {
        std::vector<PredictionRecord> records;
        std::vector<double> pos_scores;
        std::vector<int> bin_labels;
        for (std::size_t idx : indices) {
            auto fo = model.forward(episodes[idx], opt);
            const int truth = task == Task::kMortality ? episodes[idx].mortality_label
                                                       : episodes[idx].los_class;
            records.push_back(make_record(truth, fo.task_scores));
            if (task == Task::kMortality) {
                pos_scores.push_back(fo.task_scores[1]);
                bin_labels.push_back(truth);
            }
        }
        out.values["accuracy"] = accuracy(records);
        auto prf = macro_prf1(records);
        out.values["macro_precision"] = prf.precision;
        out.values["macro_recall"] = prf.recall;
        out.values["macro_f1"] = prf.f1;
        if (task == Task::kMortality) {
            try {
                out.values["auroc"] = auroc(pos_scores, bin_labels);
                out.values["auprc"] = auprc(pos_scores, bin_labels);
            } catch (const UndefinedMetricError&) {
                out.values["auprc"] = 0.0;  // single-class slice
            }
        } else {
            std::vector<int> truths, preds;
            for (const auto& r : records) {
                truths.push_back(r.true_class);
                preds.push_back(r.predicted_class);
            }
            out.values["kappa"] = cohens_kappa(truths, preds);
            try {
                out.values["auroc"] = auroc_ovr_macro(records);
                out.values["auprc"] = auprc_ovr_macro(records);
            } catch (const UndefinedMetricError&) {
            }
        }
    }
    return out;
}

TrainResult train_single(const ExperimentConfig& raw_config, const std::vector<Episode>& cohort,
                         std::uint64_t seed) {
    const ExperimentConfig config = apply_ablation(raw_config);
    Model model(config, Rng::derive(seed, 0x0DE1));
    Rng order_rng(Rng::derive(seed, 0x5F1E));
    auto split = split_cohort(cohort.size());

    // Training-only EHR degradation (the robustness protocol).
    std::vector<Episode> train_pool;
    train_pool.reserve(split.train.size());
    for (std::size_t idx : split.train) {
        if (config.missing_ehr_rate > 0.0) {
            train_pool.push_back(inject_missing_ehr(cohort[idx], config.missing_ehr_rate,
                                                    Rng::derive(seed, 0xE4A + idx)));
        } else {
            train_pool.push_back(cohort[idx]);
        }
    }

    AdamW opt(model.params());
    Rng dropout_rng(Rng::derive(seed, 0xD90));

    TrainResult result;
    result.best_metric = -std::numeric_limits<double>::infinity();
    int stall = 0;
    std::vector<std::size_t> order(train_pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t micro = static_cast<std::size_t>(config.batch_size);
    const std::size_t effective = micro * static_cast<std::size_t>(config.accumulation_steps);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const double lr = cosine_lr(config.learning_rate, 0.0, epoch - 1, config.max_epochs);
        order_rng.shuffle(order);

        double ep_total = 0, ep_pred = 0, ep_orth = 0, ep_temp = 0, ep_pae = 0;
        std::size_t n_seen = 0;
        bool numeric_failure = false;
        for (std::size_t start = 0; start < order.size() && !numeric_failure;
             start += effective) {
            const std::size_t stop = std::min(order.size(), start + effective);
            const double n_eff = static_cast<double>(stop - start);
            model.params().zero_grads();
            for (std::size_t mstart = start; mstart < stop; mstart += micro) {
                const std::size_t mstop = std::min(stop, mstart + micro);
                std::vector<EpisodeOutput> outputs;
                ForwardOptions fopt;
                fopt.training = true;
                fopt.rng = &dropout_rng;
                fopt.want_eval_outputs = false;
                for (std::size_t q = mstart; q < mstop; ++q) {
                    outputs.push_back(model.forward(train_pool[order[q]], fopt));
                }
                BatchLoss bl;
                try {
                    bl = total_loss(outputs, config);
                } catch (const NumericError&) {
                    numeric_failure = true;
                    break;
                }
                const double w = static_cast<double>(mstop - mstart) / n_eff;
                backward(scale(bl.total, w));
                ep_total += bl.total.item() * (mstop - mstart);
                ep_pred += bl.pred * (mstop - mstart);
                ep_orth += bl.orth * (mstop - mstart);
                ep_temp += bl.temp * (mstop - mstart);
                ep_pae += bl.pae * (mstop - mstart);
                n_seen += mstop - mstart;
            }
            if (!numeric_failure) opt.step(model.params(), lr);
        }
        if (numeric_failure) {
            result.diverged = true;
            break;  // last good checkpoint already retained
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.loss_total = ep_total / std::max<std::size_t>(1, n_seen);
        rec.loss_pred = ep_pred / std::max<std::size_t>(1, n_seen);
        rec.loss_orth = ep_orth / std::max<std::size_t>(1, n_seen);
        rec.loss_temp = ep_temp / std::max<std::size_t>(1, n_seen);
        rec.loss_pae = ep_pae / std::max<std::size_t>(1, n_seen);
        rec.val_metric = evaluate(model, cohort, split.val).selection(config.selection_metric);
        result.history.push_back(rec);

        if (!std::isfinite(rec.val_metric)) {
            result.diverged = true;
            break;
        }
        if (rec.val_metric > result.best_metric) {
            result.best_metric = rec.val_metric;
            result.best_epoch = epoch;
            result.best_params = snapshot_values(model.params());
            stall = 0;
        } else {
            ++stall;
        }
        if (stall >= config.patience) break;
    }

    if (result.best_params.empty()) {
        result.best_params = snapshot_values(model.params());
        result.best_epoch = 0;
    }
    restore_values(model.params(), result.best_params);
    result.test_metrics = evaluate(model, cohort, split.test);
    return result;
}

void parallel_for_lanes(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t lanes = 1;
    if (const char* env = std::getenv("DIPRO_MAX_LANES")) {
        lanes = std::max<std::size_t>(1, static_cast<std::size_t>(std::atoi(env)));
    }
    lanes = std::min(lanes, n);
    if (lanes <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    std::size_t next = 0;
    for (std::size_t chunk = 0; chunk < lanes; ++chunk) {
        const std::size_t begin = next;
        const std::size_t count = (n - begin) / (lanes - chunk);
        next = begin + count;
        pool.emplace_back([&, begin, count] {
            for (std::size_t i = begin; i < begin + count; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<SeedRun> train_seeds(const ExperimentConfig& config,
                                 const std::vector<Episode>& cohort) {
    std::vector<SeedRun> runs(config.seeds.size());
    parallel_for_lanes(config.seeds.size(), [&](std::size_t i) {
        runs[i].seed = config.seeds[i];
        runs[i].result = train_single(config, cohort, config.seeds[i]);
    });
    return runs;
}

AblationRecord run_ablation(Ablation variant, const ExperimentConfig& base,
                            const std::vector<Episode>& cohort) {
    ExperimentConfig cfg = base;
    cfg.ablation = variant;
    AblationRecord rec;
    rec.variant = variant;
    {
        Model probe(cfg, 1);
        rec.param_count = probe.params().total_size();
    }
    auto runs = train_seeds(cfg, cohort);
    for (const auto& run : runs) {
        rec.per_seed_test.push_back(run.result.test_metrics.selection(cfg.selection_metric));
    }
    double mean = 0;
    for (double v : rec.per_seed_test) mean += v / rec.per_seed_test.size();
    double var = 0;
    for (double v : rec.per_seed_test) var += (v - mean) * (v - mean) / rec.per_seed_test.size();
    rec.mean = mean;
    rec.stddev = std::sqrt(var);
    return rec;
}

GridResult grid_search(const ExperimentConfig& base, const SweepGrid& grid,
                       const std::vector<Episode>& cohort) {
    if (grid.learning_rates.empty() || grid.dropouts.empty() || grid.hidden_dims.empty() ||
        grid.lambda_temp.empty() || grid.lambda_pred.empty() || grid.lambda_pae.empty() ||
        grid.lambda_orth.empty()) {
        throw ContractError("grid_search: every axis needs at least one value");
    }
    std::vector<ExperimentConfig> configs;
    std::vector<std::string> labels;
    for (double lr : grid.learning_rates)
        for (double dr : grid.dropouts)
            for (int hd : grid.hidden_dims)
                for (double lt : grid.lambda_temp)
                    for (double lp : grid.lambda_pred)
                        for (double lpae : grid.lambda_pae)
                            for (double lo : grid.lambda_orth) {
                                ExperimentConfig c = base;
                                c.learning_rate = lr;
                                c.dropout_rate = dr;
                                c.dims.d = hd;
                                c.loss.temp = lt;
                                c.loss.pred = lp;
                                c.loss.pae = lpae;
                                c.loss.orth = lo;
                                configs.push_back(c);
                                char buf[160];
                                std::snprintf(buf, sizeof(buf),
                                              "lr=%g dropout=%g d=%d lt=%g lp=%g lpae=%g lo=%g",
                                              lr, dr, hd, lt, lp, lpae, lo);
                                labels.emplace_back(buf);
                                if (grid.max_configs > 0 &&
                                    static_cast<int>(configs.size()) >= grid.max_configs) {
                                    goto done;
                                }
                            }
done:
    GridResult result;
    result.leaderboard.resize(configs.size());
    parallel_for_lanes(configs.size(), [&](std::size_t i) {
        auto run = train_single(configs[i], cohort, configs[i].seeds.front());
        result.leaderboard[i] = {configs[i], run.best_metric, labels[i]};
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.leaderboard.size(); ++i) {
        // strict improvement only: lexicographic order breaks ties
        if (result.leaderboard[i].val_metric > result.leaderboard[best].val_metric) best = i;
    }
    result.best = result.leaderboard[best];
    return result;
}

std::vector<RobustnessCell> robustness_protocol(const ExperimentConfig& base,
                                                const std::vector<Episode>& cohort,
                                                const std::vector<double>& rates) {
    if (rates.empty()) throw ContractError("robustness: need at least one rate");
    std::vector<RobustnessCell> cells(rates.size() * base.seeds.size());
    parallel_for_lanes(cells.size(), [&](std::size_t idx) {
        const std::size_t ri = idx / base.seeds.size();
        const std::size_t si = idx % base.seeds.size();
        ExperimentConfig cfg = base;
        cfg.missing_ehr_rate = rates[ri];
        auto run = train_single(cfg, cohort, base.seeds[si]);
        cells[idx] = {rates[ri], base.seeds[si], run.best_metric,
                      run.test_metrics.selection(cfg.selection_metric)};
    });
    return cells;
}

std::vector<double> export_region_attention(const Model& model,
                                            const std::vector<Episode>& episodes,
                                            const std::vector<std::size_t>& indices) {
    if (!model.has_static_attention()) {
        throw ContractError("attention export requires the static-fusion prediction path");
    }
    if (indices.empty()) throw ContractError("attention export: empty cohort");
    const int R = model.config().dims.R;
    std::vector<double> mass(static_cast<std::size_t>(R), 0.0);
    ForwardOptions opt;
    for (std::size_t idx : indices) {
        auto out = model.forward(episodes[idx], opt);
        if (!out.attention_available) {
            throw ContractError("attention export: forward produced no attention weights");
        }
        for (int r = 0; r < R; ++r) {
            mass[static_cast<std::size_t>(r)] +=
                out.region_attention[static_cast<std::size_t>(r)] / indices.size();
        }
    }
    double total = 0;
    for (double v : mass) total += v;
    if (total <= 0) throw NumericError("attention export: zero total mass");
    for (auto& v : mass) v /= total;
    return mass;
}

}  // namespace dipro
