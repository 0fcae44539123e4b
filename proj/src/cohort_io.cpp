#include "dipro/cohort_io.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "dipro/errors.hpp"

namespace dipro {

using nlohmann::json;

namespace {

json nested2(const std::vector<double>& flat, int rows, int cols) {
    json out = json::array();
    for (int i = 0; i < rows; ++i) {
        json row = json::array();
        for (int j = 0; j < cols; ++j) {
            row.push_back(flat[static_cast<std::size_t>(i) * cols + j]);
        }
        out.push_back(std::move(row));
    }
    return out;
}

template <typename T>
json nested3(const std::vector<T>& flat, int a, int b, int c) {
    json out = json::array();
    for (int i = 0; i < a; ++i) {
        json mid = json::array();
        for (int j = 0; j < b; ++j) {
            json row = json::array();
            for (int k = 0; k < c; ++k) {
                row.push_back(flat[(static_cast<std::size_t>(i) * b + j) * c + k]);
            }
            mid.push_back(std::move(row));
        }
        out.push_back(std::move(mid));
    }
    return out;
}

std::vector<double> flat2(const json& j, int* rows, int* cols, const char* field) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw ParseError(std::string("cohort: field '") + field + "' must be a 2-D array");
    }
    *rows = static_cast<int>(j.size());
    *cols = static_cast<int>(j[0].size());
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(*rows) * *cols);
    for (const auto& row : j) {
        if (static_cast<int>(row.size()) != *cols) {
            throw ParseError(std::string("cohort: ragged rows in field '") + field + "'");
        }
        for (const auto& v : row) flat.push_back(v.get<double>());
    }
    return flat;
}

template <typename T>
std::vector<T> flat3(const json& j, int* a, int* b, int* c, const char* field) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty() || !j[0][0].is_array()) {
        throw ParseError(std::string("cohort: field '") + field + "' must be a 3-D array");
    }
    *a = static_cast<int>(j.size());
    *b = static_cast<int>(j[0].size());
    *c = static_cast<int>(j[0][0].size());
    std::vector<T> flat;
    flat.reserve(static_cast<std::size_t>(*a) * *b * *c);
    for (const auto& mid : j) {
        if (static_cast<int>(mid.size()) != *b) {
            throw ParseError(std::string("cohort: ragged array in field '") + field + "'");
        }
        for (const auto& row : mid) {
            if (static_cast<int>(row.size()) != *c) {
                throw ParseError(std::string("cohort: ragged array in field '") + field + "'");
            }
            for (const auto& v : row) flat.push_back(v.get<T>());
        }
    }
    return flat;
}

json episode_to_json(const Episode& ep) {
    json j;
    j["patient_id"] = ep.patient_id;
    j["snapshot_times"] = ep.snapshot_times;
    j["region_features"] = nested3(ep.region_features, ep.T, ep.R, ep.d_in);
    j["ehr_times"] = ep.ehr_times;
    j["ehr_series"] = nested2(ep.ehr_series, ep.ehr_rows(), ep.N);
    j["demographics"] = ep.demographics;
    j["progression_labels"] = nested3(ep.progression_labels, ep.pairs(), ep.R, ep.K);
    j["label_present"] = nested3(ep.label_present, ep.pairs(), ep.R, ep.K);
    j["mortality"] = ep.mortality_label;
    j["los_class"] = ep.los_class;
    return j;
}

Episode episode_from_json(const json& j) {
    Episode ep;
    for (const char* field : {"patient_id", "snapshot_times", "region_features", "ehr_times",
                              "ehr_series", "demographics", "progression_labels", "label_present",
                              "mortality", "los_class"}) {
        if (!j.contains(field)) {
            throw ParseError(std::string("cohort: missing field '") + field + "'");
        }
    }
    ep.patient_id = j["patient_id"].get<std::string>();
    ep.snapshot_times = j["snapshot_times"].get<std::vector<double>>();
    int t = 0, r = 0, din = 0;
    ep.region_features = flat3<double>(j["region_features"], &t, &r, &din, "region_features");
    ep.T = t;
    ep.R = r;
    ep.d_in = din;
    ep.ehr_times = j["ehr_times"].get<std::vector<double>>();
    int rows = 0, n = 0;
    ep.ehr_series = flat2(j["ehr_series"], &rows, &n, "ehr_series");
    ep.N = n;
    if (rows != ep.ehr_rows()) throw ParseError("cohort: ehr_series rows do not match ehr_times");
    ep.demographics = j["demographics"].get<std::vector<double>>();
    ep.P = static_cast<int>(ep.demographics.size());
    int pairs = 0, r2 = 0, k = 0;
    ep.progression_labels = flat3<int>(j["progression_labels"], &pairs, &r2, &k, "progression_labels");
    ep.K = k;
    if (pairs != ep.T - 1 || r2 != ep.R) {
        throw ParseError("cohort: progression_labels extent does not match snapshots/regions");
    }
    ep.label_present = flat3<std::uint8_t>(j["label_present"], &pairs, &r2, &k, "label_present");
    ep.mortality_label = j["mortality"].get<int>();
    ep.los_class = j["los_class"].get<int>();
    ep.d_s = 0;
    ep.validate();
    return ep;
}

}  // namespace

void write_cohort(const std::vector<Episode>& episodes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for write: " + path);
    for (const auto& ep : episodes) {
        out << episode_to_json(ep).dump() << "\n";
    }
    if (!out) throw ParseError("write failed: " + path);
}

void write_oracle_sidecar(const std::vector<Episode>& episodes, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for write: " + path);
    for (const auto& ep : episodes) {
        json j;
        j["patient_id"] = ep.patient_id;
        j["hidden_static"] = nested2(ep.hidden_static, ep.R, ep.d_s);
        j["hidden_dynamic"] = nested3(ep.hidden_dynamic, ep.pairs(), ep.R, ep.K);
        out << j.dump() << "\n";
    }
    if (!out) throw ParseError("write failed: " + path);
}

std::vector<Episode> read_cohort(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open cohort file: " + path);
    std::vector<Episode> episodes;
    std::string line;
    int lineno = 0;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("cohort parse error at line " + std::to_string(lineno) +
                             ", byte offset " + std::to_string(line_start + e.byte) + ": " +
                             e.what());
        }
        try {
            episodes.push_back(episode_from_json(j));
        } catch (const std::exception& e) {
            throw ParseError("cohort line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return episodes;
}

void merge_oracle_sidecar(std::vector<Episode>& episodes, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open oracle sidecar: " + path);
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> hidden;
    std::map<std::string, int> ds_by_id;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("sidecar parse error at line " + std::to_string(lineno) + ": " +
                             e.what());
        }
        int r = 0, ds = 0, pairs = 0, r2 = 0, k = 0;
        auto hs = flat2(j["hidden_static"], &r, &ds, "hidden_static");
        auto hd = flat3<double>(j["hidden_dynamic"], &pairs, &r2, &k, "hidden_dynamic");
        const std::string id = j["patient_id"].get<std::string>();
        hidden[id] = {std::move(hs), std::move(hd)};
        ds_by_id[id] = ds;
    }
    for (auto& ep : episodes) {
        auto it = hidden.find(ep.patient_id);
        if (it == hidden.end()) {
            throw ParseError("sidecar missing patient " + ep.patient_id);
        }
        ep.hidden_static = it->second.first;
        ep.hidden_dynamic = it->second.second;
        ep.d_s = ds_by_id[ep.patient_id];
    }
}

}  // namespace dipro
