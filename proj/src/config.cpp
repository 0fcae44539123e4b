#include "dipro/config.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dipro/errors.hpp"

namespace dipro {

std::string to_string(Task t) {
    switch (t) {
        case Task::kMortality: return "mortality";
        case Task::kLos: return "los";
        case Task::kProgression: return "progression";
    }
    return "?";
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::kFull: return "full";
        case Ablation::kA1: return "A1";
        case Ablation::kA2: return "A2";
        case Ablation::kA3: return "A3";
        case Ablation::kA4: return "A4";
        case Ablation::kB1: return "B1";
        case Ablation::kB2: return "B2";
        case Ablation::kB3: return "B3";
    }
    return "?";
}

std::string to_string(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::kMacroF1: return "macro_f1";
        case SelectionMetric::kAccuracy: return "accuracy";
        case SelectionMetric::kAuprc: return "auprc";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "mortality") return Task::kMortality;
    if (s == "los") return Task::kLos;
    if (s == "progression") return Task::kProgression;
    throw ContractError("unknown task: " + s);
}

Ablation ablation_from_string(const std::string& s) {
    for (Ablation a : {Ablation::kFull, Ablation::kA1, Ablation::kA2, Ablation::kA3, Ablation::kA4,
                       Ablation::kB1, Ablation::kB2, Ablation::kB3}) {
        if (to_string(a) == s) return a;
    }
    throw ContractError("unknown ablation variant: " + s);
}

SelectionMetric selection_metric_from_string(const std::string& s) {
    if (s == "macro_f1") return SelectionMetric::kMacroF1;
    if (s == "accuracy") return SelectionMetric::kAccuracy;
    if (s == "auprc") return SelectionMetric::kAuprc;
    throw ContractError("unknown selection metric: " + s);
}

LossWeights default_loss_weights(Task task) {
    switch (task) {
        case Task::kMortality: return {6.0, 0.1, 1.0, 0.1, 1.0};
        case Task::kLos: return {10.0, 0.001, 0.1, 0.1, 1.0};
        case Task::kProgression: return {2.0, 1.0, 0.0, 2.0, 1.0};
    }
    return {};
}

SelectionMetric default_selection_metric(Task task) {
    switch (task) {
        case Task::kMortality: return SelectionMetric::kAuprc;
        case Task::kLos: return SelectionMetric::kAccuracy;
        case Task::kProgression: return SelectionMetric::kMacroF1;
    }
    return SelectionMetric::kMacroF1;
}

void CohortConfig::validate() const {
    if (n_patients < 1) throw ContractError("cohort: n_patients must be >= 1");
    if (R < 1 || K < 1 || d_in < 1 || N < 1 || P < 1 || d_s < 1) {
        throw ContractError("cohort: all dimensions must be >= 1");
    }
    double total = 0.0;
    for (double p : t_probs) {
        if (p < 0.0) throw ContractError("cohort: negative snapshot-count probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("cohort: t_probs must sum to 1");
    if (missing_ehr_rate < 0.0 || missing_ehr_rate > 1.0) {
        throw ContractError("cohort: missing_ehr_rate must be in [0,1]");
    }
    if (label_presence_rate < 0.0 || label_presence_rate > 1.0) {
        throw ContractError("cohort: label_presence_rate must be in [0,1]");
    }
    if (d_in < d_s + K) {
        throw ContractError("cohort: d_in must be >= d_s + K so hidden factors stay recoverable");
    }
    if (duration_hours < 2.0 * ehr_interval_hours || ehr_interval_hours <= 0.0) {
        throw ContractError("cohort: need at least two EHR sampling points");
    }
    if (!label_priors.empty() && static_cast<int>(label_priors.size()) != K) {
        throw ContractError("cohort: label_priors must have one triple per disease");
    }
    if (signal_region >= R) throw ContractError("cohort: signal_region out of range");
}

void ExperimentConfig::validate() const {
    if (loss.pred < 0 || loss.orth < 0 || loss.temp < 0 || loss.pae < 0 || loss.static_rev < 0) {
        throw ContractError("config: loss weights must be nonnegative");
    }
    if (patience > max_epochs) throw ContractError("config: patience must be <= max_epochs");
    if (patience < 1 || max_epochs < 1) throw ContractError("config: patience/max_epochs must be >= 1");
    if (batch_size < 1 || accumulation_steps < 1) {
        throw ContractError("config: batch_size/accumulation_steps must be >= 1");
    }
    if (learning_rate <= 0.0) throw ContractError("config: learning_rate must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ContractError("config: dropout_rate must be in [0,1)");
    }
    if (seeds.empty()) throw ContractError("config: at least one seed required");
    if (dims.d < 2 || dims.d % dims.ehr_heads != 0) {
        throw ContractError("config: model dim d must be a positive multiple of ehr_heads");
    }
    if (missing_ehr_rate < 0.0 || missing_ehr_rate > 1.0) {
        throw ContractError("config: missing_ehr_rate must be in [0,1]");
    }
    cohort.validate();
}

namespace {

struct RawConfig {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::map<std::string, std::map<std::string, bool>> consumed;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

RawConfig parse_raw(const std::string& text) {
    RawConfig raw;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError("config line " + std::to_string(lineno) + ": unterminated section");
            }
            section = trim(line.substr(1, line.size() - 2));
            raw.sections[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        }
        auto& sec = raw.sections[section];
        if (sec.count(key)) {
            throw ParseError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                             "' in section [" + section + "]");
        }
        sec[key] = value;
    }
    return raw;
}

class Section {
public:
    Section(RawConfig& raw, std::string name) : raw_(raw), name_(std::move(name)) {}

    bool has(const std::string& key) const {
        auto it = raw_.sections.find(name_);
        return it != raw_.sections.end() && it->second.count(key);
    }

    std::string get(const std::string& key) {
        raw_.consumed[name_][key] = true;
        return raw_.sections.at(name_).at(key);
    }

    void maybe_int(const std::string& key, int& out) {
        if (has(key)) out = parse_int(key, get(key));
    }
    void maybe_double(const std::string& key, double& out) {
        if (has(key)) out = parse_double(key, get(key));
    }
    void maybe_bool(const std::string& key, bool& out) {
        if (!has(key)) return;
        const std::string v = get(key);
        if (v == "true" || v == "1") {
            out = true;
        } else if (v == "false" || v == "0") {
            out = false;
        } else {
            throw ParseError("config: key '" + key + "' expects true/false, got '" + v + "'");
        }
    }

    int parse_int(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            int r = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return r;
        } catch (...) {
            throw ParseError("config: key '" + key + "' expects an integer, got '" + v + "'");
        }
    }

    double parse_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return r;
        } catch (...) {
            throw ParseError("config: key '" + key + "' expects a number, got '" + v + "'");
        }
    }

    std::vector<std::string> split_list(const std::string& v) {
        std::vector<std::string> parts;
        std::string cur;
        std::istringstream in(v);
        while (std::getline(in, cur, ',')) {
            cur = trim(cur);
            if (!cur.empty()) parts.push_back(cur);
        }
        return parts;
    }

private:
    RawConfig& raw_;
    std::string name_;
};

void reject_unknown(const RawConfig& raw, const std::vector<std::string>& known_sections) {
    for (const auto& [sec, kv] : raw.sections) {
        bool known = false;
        for (const auto& k : known_sections) known = known || k == sec;
        if (!known) throw ParseError("config: unknown section [" + sec + "]");
        for (const auto& [key, value] : kv) {
            (void)value;
            auto cit = raw.consumed.find(sec);
            if (cit == raw.consumed.end() || !cit->second.count(key)) {
                throw ParseError("config: unknown key '" + key + "' in section [" + sec + "]");
            }
        }
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    RawConfig raw = parse_raw(text);
    ExperimentConfig cfg;

    Section exp(raw, "experiment");
    if (exp.has("task")) cfg.task = task_from_string(exp.get("task"));
    if (exp.has("ablation")) cfg.ablation = ablation_from_string(exp.get("ablation"));
    if (exp.has("seeds")) {
        cfg.seeds.clear();
        for (const auto& s : exp.split_list(exp.get("seeds"))) {
            cfg.seeds.push_back(static_cast<std::uint64_t>(std::stoull(s)));
        }
    }

    Section coh(raw, "cohort");
    coh.maybe_int("n_patients", cfg.cohort.n_patients);
    coh.maybe_int("R", cfg.cohort.R);
    coh.maybe_int("K", cfg.cohort.K);
    coh.maybe_int("d_in", cfg.cohort.d_in);
    coh.maybe_int("N", cfg.cohort.N);
    coh.maybe_int("P", cfg.cohort.P);
    coh.maybe_int("d_s", cfg.cohort.d_s);
    if (coh.has("t_probs")) {
        auto parts = coh.split_list(coh.get("t_probs"));
        if (parts.size() != 4) throw ParseError("config: t_probs expects 4 values for T=2..5");
        for (std::size_t i = 0; i < 4; ++i) {
            cfg.cohort.t_probs[i] = coh.parse_double("t_probs", parts[i]);
        }
    }
    coh.maybe_double("duration_hours", cfg.cohort.duration_hours);
    coh.maybe_double("ehr_interval_hours", cfg.cohort.ehr_interval_hours);
    coh.maybe_double("noise_region", cfg.cohort.noise_region);
    coh.maybe_double("noise_ehr", cfg.cohort.noise_ehr);
    coh.maybe_double("static_scale", cfg.cohort.static_scale);
    coh.maybe_double("drift_scale", cfg.cohort.drift_scale);
    coh.maybe_double("missing_ehr_rate", cfg.cohort.missing_ehr_rate);
    coh.maybe_double("label_presence_rate", cfg.cohort.label_presence_rate);
    coh.maybe_int("signal_region", cfg.cohort.signal_region);
    if (coh.has("label_priors")) {
        cfg.cohort.label_priors.clear();
        std::istringstream in(coh.get("label_priors"));
        std::string triple;
        while (std::getline(in, triple, ';')) {
            auto parts = coh.split_list(triple);
            if (parts.size() != 3) throw ParseError("config: label_priors expects triples");
            cfg.cohort.label_priors.push_back({coh.parse_double("label_priors", parts[0]),
                                               coh.parse_double("label_priors", parts[1]),
                                               coh.parse_double("label_priors", parts[2])});
        }
    }
    if (coh.has("seed")) {
        cfg.cohort.seed = static_cast<std::uint64_t>(std::stoull(coh.get("seed")));
    }

    // Model dims follow the cohort unless set explicitly.
    cfg.dims.d_in = cfg.cohort.d_in;
    cfg.dims.R = cfg.cohort.R;
    cfg.dims.K = cfg.cohort.K;
    cfg.dims.N = cfg.cohort.N;
    cfg.dims.P = cfg.cohort.P;
    Section model(raw, "model");
    model.maybe_int("d", cfg.dims.d);
    model.maybe_int("d_in", cfg.dims.d_in);
    model.maybe_int("R", cfg.dims.R);
    model.maybe_int("K", cfg.dims.K);
    model.maybe_int("N", cfg.dims.N);
    model.maybe_int("P", cfg.dims.P);
    model.maybe_int("ehr_heads", cfg.dims.ehr_heads);
    model.maybe_bool("mask_normalize_halfwidth", cfg.mask_normalize_halfwidth);

    cfg.loss = default_loss_weights(cfg.task);
    Section loss(raw, "loss");
    loss.maybe_double("lambda_pred", cfg.loss.pred);
    loss.maybe_double("lambda_orth", cfg.loss.orth);
    loss.maybe_double("lambda_temp", cfg.loss.temp);
    loss.maybe_double("lambda_pae", cfg.loss.pae);
    loss.maybe_double("lambda_static", cfg.loss.static_rev);

    cfg.selection_metric = default_selection_metric(cfg.task);
    Section train(raw, "train");
    train.maybe_double("learning_rate", cfg.learning_rate);
    train.maybe_double("dropout_rate", cfg.dropout_rate);
    train.maybe_int("batch_size", cfg.batch_size);
    train.maybe_int("accumulation_steps", cfg.accumulation_steps);
    train.maybe_int("max_epochs", cfg.max_epochs);
    train.maybe_int("patience", cfg.patience);
    train.maybe_double("missing_ehr_rate", cfg.missing_ehr_rate);
    if (train.has("selection_metric")) {
        cfg.selection_metric = selection_metric_from_string(train.get("selection_metric"));
    }

    // [sweep] keys are read by load_sweep_grid; consume them here so a sweep
    // config also loads as a plain experiment config.
    Section sweep(raw, "sweep");
    for (const char* key : {"learning_rates", "dropouts", "hidden_dims", "lambda_temp",
                            "lambda_pred", "lambda_pae", "lambda_orth", "max_configs"}) {
        if (sweep.has(key)) sweep.get(key);
    }

    reject_unknown(raw, {"experiment", "cohort", "model", "loss", "train", "sweep"});
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

SweepGrid load_sweep_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RawConfig raw = parse_raw(ss.str());
    SweepGrid grid;
    Section sweep(raw, "sweep");
    auto load_doubles = [&](const char* key, std::vector<double>& out) {
        if (!sweep.has(key)) return;
        out.clear();
        for (const auto& s : sweep.split_list(sweep.get(key))) {
            out.push_back(sweep.parse_double(key, s));
        }
    };
    load_doubles("learning_rates", grid.learning_rates);
    load_doubles("dropouts", grid.dropouts);
    load_doubles("lambda_temp", grid.lambda_temp);
    load_doubles("lambda_pred", grid.lambda_pred);
    load_doubles("lambda_pae", grid.lambda_pae);
    load_doubles("lambda_orth", grid.lambda_orth);
    if (sweep.has("hidden_dims")) {
        grid.hidden_dims.clear();
        for (const auto& s : sweep.split_list(sweep.get("hidden_dims"))) {
            grid.hidden_dims.push_back(sweep.parse_int("hidden_dims", s));
        }
    }
    sweep.maybe_int("max_configs", grid.max_configs);
    return grid;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "task = " << to_string(cfg.task) << "\n";
    out << "ablation = " << to_string(cfg.ablation) << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
    out << "\n[model]\n";
    out << "d = " << cfg.dims.d << "\n";
    out << "d_in = " << cfg.dims.d_in << "\n";
    out << "R = " << cfg.dims.R << "\n";
    out << "K = " << cfg.dims.K << "\n";
    out << "N = " << cfg.dims.N << "\n";
    out << "P = " << cfg.dims.P << "\n";
    out << "ehr_heads = " << cfg.dims.ehr_heads << "\n";
    out << "mask_normalize_halfwidth = " << (cfg.mask_normalize_halfwidth ? "true" : "false")
        << "\n";
    out << "[loss]\n";
    out << "lambda_pred = " << fmt_double(cfg.loss.pred) << "\n";
    out << "lambda_orth = " << fmt_double(cfg.loss.orth) << "\n";
    out << "lambda_temp = " << fmt_double(cfg.loss.temp) << "\n";
    out << "lambda_pae = " << fmt_double(cfg.loss.pae) << "\n";
    out << "lambda_static = " << fmt_double(cfg.loss.static_rev) << "\n";
    out << "[train]\n";
    out << "learning_rate = " << fmt_double(cfg.learning_rate) << "\n";
    out << "dropout_rate = " << fmt_double(cfg.dropout_rate) << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "accumulation_steps = " << cfg.accumulation_steps << "\n";
    out << "max_epochs = " << cfg.max_epochs << "\n";
    out << "patience = " << cfg.patience << "\n";
    out << "selection_metric = " << to_string(cfg.selection_metric) << "\n";
    out << "missing_ehr_rate = " << fmt_double(cfg.missing_ehr_rate) << "\n";
    out << "[cohort]\n";
    out << "n_patients = " << cfg.cohort.n_patients << "\n";
    out << "R = " << cfg.cohort.R << "\n";
    out << "K = " << cfg.cohort.K << "\n";
    out << "d_in = " << cfg.cohort.d_in << "\n";
    out << "N = " << cfg.cohort.N << "\n";
    out << "P = " << cfg.cohort.P << "\n";
    out << "d_s = " << cfg.cohort.d_s << "\n";
    out << "t_probs = ";
    for (std::size_t i = 0; i < 4; ++i) out << (i ? "," : "") << fmt_double(cfg.cohort.t_probs[i]);
    out << "\n";
    out << "duration_hours = " << fmt_double(cfg.cohort.duration_hours) << "\n";
    out << "ehr_interval_hours = " << fmt_double(cfg.cohort.ehr_interval_hours) << "\n";
    out << "noise_region = " << fmt_double(cfg.cohort.noise_region) << "\n";
    out << "noise_ehr = " << fmt_double(cfg.cohort.noise_ehr) << "\n";
    out << "static_scale = " << fmt_double(cfg.cohort.static_scale) << "\n";
    out << "drift_scale = " << fmt_double(cfg.cohort.drift_scale) << "\n";
    out << "missing_ehr_rate = " << fmt_double(cfg.cohort.missing_ehr_rate) << "\n";
    out << "label_presence_rate = " << fmt_double(cfg.cohort.label_presence_rate) << "\n";
    if (!cfg.cohort.label_priors.empty()) {
        out << "label_priors = ";
        for (std::size_t k = 0; k < cfg.cohort.label_priors.size(); ++k) {
            if (k) out << ";";
            const auto& p = cfg.cohort.label_priors[k];
            out << fmt_double(p[0]) << "," << fmt_double(p[1]) << "," << fmt_double(p[2]);
        }
        out << "\n";
    }
    out << "signal_region = " << cfg.cohort.signal_region << "\n";
    out << "seed = " << cfg.cohort.seed << "\n";
    return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    const std::string s = serialize_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dipro
