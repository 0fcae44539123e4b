#include "dipro/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "dipro/cohort_io.hpp"
#include "dipro/config.hpp"
#include "dipro/errors.hpp"
#include "dipro/gradcheck.hpp"
#include "dipro/kernels.hpp"
#include "dipro/train.hpp"

#ifndef DIPRO_BUILD_VERSION
#define DIPRO_BUILD_VERSION "unknown"
#endif

namespace dipro::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunContext {
    fs::path out_dir;
    ExperimentConfig config;
    std::string verb;
};

// Every run records its manifest before any result file: config text, hash,
// seeds, build id and start time are enough to reproduce the outputs.
void write_manifest(const RunContext& ctx) {
    fs::create_directories(ctx.out_dir);
    json m;
    m["verb"] = ctx.verb;
    m["build"] = DIPRO_BUILD_VERSION;
    m["timestamp_start"] = timestamp_utc();
    char hash_hex[24];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(config_hash(ctx.config)));
    m["config_hash"] = hash_hex;
    m["seeds"] = ctx.config.seeds;
    m["kernel_lane"] = kernels::active().name;
    m["config"] = serialize_config(ctx.config);
    std::ofstream out(ctx.out_dir / "manifest.json");
    if (!out) throw ParseError("cannot write manifest in " + ctx.out_dir.string());
    out << m.dump(2) << "\n";
}

std::ofstream open_result(const RunContext& ctx, const std::string& name) {
    std::ofstream out(ctx.out_dir / name);
    if (!out) throw ParseError("cannot write " + (ctx.out_dir / name).string());
    return out;
}

std::vector<Episode> load_or_generate_cohort(const ExperimentConfig& cfg,
                                             const std::string& cohort_path) {
    if (!cohort_path.empty()) return read_cohort(cohort_path);
    return generate_cohort(cfg.cohort);
}

void write_history_csv(std::ofstream& out, const std::vector<EpochRecord>& history) {
    out << "epoch,lr,loss_total,loss_pred,loss_orth,loss_temp,loss_pae,val_metric\n";
    for (const auto& r : history) {
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.epoch, r.lr, r.loss_total, r.loss_pred, r.loss_orth, r.loss_temp,
                      r.loss_pae, r.val_metric);
        out << line;
    }
}

int verb_synth(const RunContext& ctx) {
    write_manifest(ctx);
    auto episodes = generate_cohort(ctx.config.cohort);
    write_cohort(episodes, (ctx.out_dir / "cohort.jsonl").string());
    write_oracle_sidecar(episodes, (ctx.out_dir / "cohort.oracle.jsonl").string());
    std::cout << "wrote " << episodes.size() << " episodes to " << ctx.out_dir << "\n";
    return 0;
}

int verb_train(const RunContext& ctx, const std::string& cohort_path) {
    write_manifest(ctx);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    auto runs = train_seeds(ctx.config, cohort);

    // Per-seed artifacts, then the aggregated results file.
    std::map<std::string, std::vector<double>> metric_values;
    for (const auto& run : runs) {
        auto hist = open_result(ctx, "history_" + std::to_string(run.seed) + ".csv");
        write_history_csv(hist, run.result.history);
        ExperimentConfig cfg = apply_ablation(ctx.config);
        Model model(cfg, Rng::derive(run.seed, 0x0DE1));
        restore_values(model.params(), run.result.best_params);
        save_checkpoint((ctx.out_dir / ("checkpoint_" + std::to_string(run.seed) + ".bin")).string(),
                        cfg, model.params());
        for (const auto& [name, value] : run.result.test_metrics.values) {
            metric_values[name].push_back(value);
        }
    }

    auto results = open_result(ctx, "results.csv");
    results << "task,metric,seed,value\n";
    for (const auto& run : runs) {
        for (const auto& [name, value] : run.result.test_metrics.values) {
            results << to_string(ctx.config.task) << "," << name << "," << run.seed << ","
                    << value << "\n";
        }
    }
    for (const auto& [name, values] : metric_values) {
        double mean = 0;
        for (double v : values) mean += v / values.size();
        double var = 0;
        for (double v : values) var += (v - mean) * (v - mean) / values.size();
        results << to_string(ctx.config.task) << "," << name << ",mean," << mean << "\n";
        results << to_string(ctx.config.task) << "," << name << ",std," << std::sqrt(var) << "\n";
    }
    for (const auto& run : runs) {
        std::cout << "seed " << run.seed << ": best epoch " << run.result.best_epoch
                  << ", val " << run.result.best_metric << ", test "
                  << run.result.test_metrics.selection(ctx.config.selection_metric)
                  << (run.result.diverged ? " (diverged; last good checkpoint kept)" : "") << "\n";
    }
    return 0;
}

std::vector<std::size_t> pick_split(const std::string& split, std::size_t n) {
    if (split == "all") {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    auto s = split_cohort(n);
    if (split == "train") return s.train;
    if (split == "val") return s.val;
    if (split == "test") return s.test;
    throw ContractError("unknown split: " + split);
}

int verb_eval(RunContext ctx, const std::string& checkpoint_path,
              const std::string& cohort_path, const std::string& split) {
    auto ckpt = load_checkpoint(checkpoint_path);
    ctx.config = parse_config_text(ckpt.config_text);
    write_manifest(ctx);
    Model model(ctx.config, 1);
    restore_params(model.params(), ckpt);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    auto metrics = evaluate(model, cohort, pick_split(split, cohort.size()));
    auto out = open_result(ctx, "metrics.csv");
    out << "task,metric,value\n";
    for (const auto& [name, value] : metrics.values) {
        out << to_string(ctx.config.task) << "," << name << "," << value << "\n";
        std::cout << name << " = " << value << "\n";
    }
    return 0;
}

int verb_gradcheck(const RunContext& ctx) {
    write_manifest(ctx);
    ExperimentConfig cfg = ctx.config;
    Model model(cfg, Rng::derive(cfg.seeds.front(), 0x0DE1));
    CohortConfig one = cfg.cohort;
    one.n_patients = 1;
    auto episodes = generate_cohort(one);
    ForwardOptions opt;
    opt.training = false;
    opt.want_eval_outputs = false;
    auto loss_fn = [&] {
        std::vector<EpisodeOutput> outputs;
        outputs.push_back(model.forward(episodes.front(), opt));
        return total_loss(outputs, model.config()).total;
    };
    const double err = grad_check(loss_fn, model.params().tensors(), 1e-5);
    std::cout << "max relative error = " << err << " over "
              << model.params().total_size() << " parameters\n";
    auto out = open_result(ctx, "gradcheck.txt");
    out << err << "\n";
    return err < 1e-4 ? 0 : 2;
}

int verb_ablate(const RunContext& ctx, bool all, const std::string& cohort_path) {
    write_manifest(ctx);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    std::vector<Ablation> variants;
    if (all) {
        variants = {Ablation::kFull, Ablation::kA1, Ablation::kA2, Ablation::kA3,
                    Ablation::kA4,   Ablation::kB1, Ablation::kB2, Ablation::kB3};
    } else {
        variants = {ctx.config.ablation};
    }
    auto out = open_result(ctx, "ablation.csv");
    out << "variant,param_count,metric";
    for (auto seed : ctx.config.seeds) out << ",seed" << seed;
    out << ",mean,std\n";
    for (auto v : variants) {
        auto rec = run_ablation(v, ctx.config, cohort);
        out << to_string(v) << "," << rec.param_count << ","
            << to_string(ctx.config.selection_metric);
        for (double s : rec.per_seed_test) out << "," << s;
        out << "," << rec.mean << "," << rec.stddev << "\n";
        std::cout << to_string(v) << ": " << rec.mean << " +/- " << rec.stddev << " ("
                  << rec.param_count << " params)\n";
    }
    return 0;
}

int verb_sweep(const RunContext& ctx, const std::string& config_path,
               const std::string& cohort_path) {
    write_manifest(ctx);
    SweepGrid grid = config_path.empty() ? SweepGrid{} : load_sweep_grid(config_path);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    auto result = grid_search(ctx.config, grid, cohort);
    auto out = open_result(ctx, "leaderboard.csv");
    out << "rank,val_metric,settings\n";
    for (std::size_t i = 0; i < result.leaderboard.size(); ++i) {
        out << i << "," << result.leaderboard[i].val_metric << ","
            << result.leaderboard[i].label << "\n";
    }
    auto best = open_result(ctx, "best_config.cfg");
    best << serialize_config(result.best.config);
    std::cout << "best: " << result.best.label << " (val " << result.best.val_metric << ") over "
              << result.leaderboard.size() << " configs\n";
    return 0;
}

int verb_robustness(const RunContext& ctx, const std::vector<double>& rates,
                    const std::string& cohort_path) {
    write_manifest(ctx);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    auto cells = robustness_protocol(ctx.config, cohort, rates);
    auto out = open_result(ctx, "robustness.csv");
    out << "rate,seed,val_metric,test_metric\n";
    std::map<double, std::vector<double>> by_rate;
    for (const auto& c : cells) {
        out << c.rate << "," << c.seed << "," << c.val_metric << "," << c.test_metric << "\n";
        by_rate[c.rate].push_back(c.val_metric);
    }
    out << "rate,mean_val_metric\n";
    for (const auto& [rate, vals] : by_rate) {
        double mean = 0;
        for (double v : vals) mean += v / vals.size();
        out << rate << "," << mean << "\n";
        std::cout << "rate " << rate << ": mean val " << mean << "\n";
    }
    return 0;
}

int verb_attn_export(RunContext ctx, const std::string& checkpoint_path,
                     const std::string& cohort_path, const std::string& split) {
    auto ckpt = load_checkpoint(checkpoint_path);
    ctx.config = parse_config_text(ckpt.config_text);
    write_manifest(ctx);
    Model model(ctx.config, 1);
    restore_params(model.params(), ckpt);
    auto cohort = load_or_generate_cohort(ctx.config, cohort_path);
    auto weights = export_region_attention(model, cohort, pick_split(split, cohort.size()));
    auto out = open_result(ctx, "attention.csv");
    out << "task,region,weight\n";
    for (std::size_t r = 0; r < weights.size(); ++r) {
        out << to_string(ctx.config.task) << "," << r << "," << weights[r] << "\n";
    }
    std::cout << "wrote attention weights for " << weights.size() << " regions\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Disease-progression experiments on synthetic cohorts: region-level "
                 "static/dynamic disentanglement, reversal-based enhancement, and "
                 "multiscale fusion with irregular EHR series."};
    app.require_subcommand(1);
    app.footer("Environment: DIPRO_MAX_LANES caps parallel runs; "
               "DIPRO_KERNEL_LANE=scalar|avx2|neon|auto pins the arithmetic kernels.");

    std::string config_path, out_dir = "runs/latest", cohort_path, checkpoint_path;
    std::string split = "test";
    std::vector<std::uint64_t> seed_override;
    std::string task_override, ablation_override;
    std::string rates_csv = "0,0.25,0.5,0.75";
    bool ablate_all = false;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* copt = sub->add_option("--config", config_path, "experiment config file");
        if (need_config) copt->required();
        sub->add_option("--out", out_dir, "output directory for this run");
        sub->add_option("--seed", seed_override, "override the config seed list");
        sub->add_option("--task", task_override, "override task: mortality|los|progression");
        sub->add_option("--ablation", ablation_override,
                        "override variant: full|A1|A2|A3|A4|B1|B2|B3");
    };

    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort + oracle sidecar");
    add_common(synth, true);

    auto* train = app.add_subcommand("train", "train over the config seed list");
    add_common(train, true);
    train->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (read-only)");
    add_common(eval, false);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");
    eval->add_option("--split", split, "all|train|val|test (default test)");

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference check of the composite loss; exit 0 iff < 1e-4");
    add_common(gradcheck, true);

    auto* ablate = app.add_subcommand("ablate", "train ablation variants");
    add_common(ablate, true);
    ablate->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");
    ablate->add_flag("--all", ablate_all, "run all 8 variants (full, A1-A4, B1-B3)");

    auto* sweep = app.add_subcommand("sweep", "hyperparameter grid search");
    add_common(sweep, true);
    sweep->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");

    auto* robustness = app.add_subcommand("robustness", "missing-EHR training protocol");
    add_common(robustness, true);
    robustness->add_option("--rates", rates_csv, "comma-separated drop rates");
    robustness->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");

    auto* attn = app.add_subcommand("attn-export", "per-region attention weights of a checkpoint");
    add_common(attn, false);
    attn->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    attn->add_option("--cohort", cohort_path, "cohort file (generated from config if absent)");
    attn->add_option("--split", split, "all|train|val|test (default all)");
    split = "test";

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunContext ctx;
        ctx.out_dir = out_dir;
        if (!config_path.empty()) ctx.config = load_config(config_path);
        if (!task_override.empty()) {
            ctx.config.task = task_from_string(task_override);
            ctx.config.loss = default_loss_weights(ctx.config.task);
            ctx.config.selection_metric = default_selection_metric(ctx.config.task);
        }
        if (!ablation_override.empty()) ctx.config.ablation = ablation_from_string(ablation_override);
        if (!seed_override.empty()) ctx.config.seeds = seed_override;
        ctx.config.validate();

        if (*synth) {
            ctx.verb = "synth";
            return verb_synth(ctx);
        }
        if (*train) {
            ctx.verb = "train";
            return verb_train(ctx, cohort_path);
        }
        if (*eval) {
            ctx.verb = "eval";
            return verb_eval(ctx, checkpoint_path, cohort_path, split);
        }
        if (*gradcheck) {
            ctx.verb = "gradcheck";
            return verb_gradcheck(ctx);
        }
        if (*ablate) {
            ctx.verb = "ablate";
            return verb_ablate(ctx, ablate_all, cohort_path);
        }
        if (*sweep) {
            ctx.verb = "sweep";
            return verb_sweep(ctx, config_path, cohort_path);
        }
        if (*robustness) {
            std::vector<double> rates;
            std::stringstream ss(rates_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!tok.empty()) rates.push_back(std::stod(tok));
            }
            ctx.verb = "robustness";
            return verb_robustness(ctx, rates, cohort_path);
        }
        if (*attn) {
            ctx.verb = "attn-export";
            return verb_attn_export(ctx, checkpoint_path, cohort_path,
                                    attn->count("--split") ? split : "all");
        }
        std::cerr << "no verb selected\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace dipro::cli
